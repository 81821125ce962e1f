import numpy as np
import pytest

from mprnet.attention import AttentionState
from mprnet.mpr import (SFR, TFR, MprConfig, MprCore, RecurrenceTrace, TraceEntry, adaptive_merge,
                        run_mpr)
from mprnet.nn import InitContext
from mprnet.pconv import closure_index
from mprnet.tensor import Tensor, no_grad


def hole_mask(size, hole):
    m = np.ones((1, 1, size, size))
    lo = (size - hole) // 2
    m[..., lo:lo + hole, lo:lo + hole] = 0.0
    return m


def core(seed=0, **kw):
    cfg = MprConfig(**{"channels": 3, "tfr_window": 8, **kw})
    return MprCore(InitContext(seed=seed), cfg)


def features(mask, c=3, seed=0):
    return np.random.default_rng(seed).normal(size=(1, c, *mask.shape[2:])) * mask


def test_config_validation():
    with pytest.raises(ValueError):
        MprConfig(sfr_iterations=0)


def test_all_valid_input_is_fixed_point():
    c = core()
    m = np.ones((1, 1, 8, 8))
    f, m2, _, _ = c.sfr_step(Tensor(features(m)), m, AttentionState())
    assert np.all(m2 == 1) and np.all(np.isfinite(f.data))
    f, m3, _, _ = c.tfr_step(f, m2, AttentionState())
    assert np.all(m3 == 1)


def test_sfr_step_grows_mask():
    c = core()
    m = hole_mask(32, 8)
    _, m2, _, _ = c.sfr_step(Tensor(features(m)), m, AttentionState())
    assert m2.sum() > m.sum()


def test_tfr_growth_not_more_than_sfr():
    # contiguous holes; for scattered valid pixels the two 25-tap footprints
    # can overlap differently and the ordering does not hold
    c = core()
    rng = np.random.default_rng(1)
    for _ in range(5):
        m = np.ones((1, 1, 24, 24))
        y, x = rng.integers(0, 12, size=2)
        hh, ww = rng.integers(4, 12, size=2)
        m[..., y:y + hh, x:x + ww] = 0.0
        f = Tensor(features(m))
        _, ms, _, _ = c.sfr_step(f, m, AttentionState())
        _, mt, _, _ = c.tfr_step(f, m, AttentionState())
        assert mt.sum() <= ms.sum()


def test_run_closes_at_oracle_index_and_stays_closed():
    for dil in (1, 2):
        c = core(sfr_dilation=dil)
        m = hole_mask(32, 8)
        with no_grad():
            _, _, final, trace = run_mpr(c, Tensor(features(m)), m)
        expected = closure_index(m, c.cfg.closure_schedule())
        assert trace.closure_index() == expected
        assert all(np.all(e.mask == 1) for e in trace.entries[expected - 1:])
        assert np.all(final == 1)
        assert [e.stage for e in trace.entries] == [SFR] * 4 + [TFR] * 4


def test_default_config_closes_16px_hole_in_64px_map():
    c = core(channels=1)
    m = hole_mask(64, 16)
    with no_grad():
        _, _, final, _ = run_mpr(c, Tensor(features(m, c=1)), m)
    assert np.all(final == 1)


def test_trace_masks_monotone_across_stages():
    c = core()
    m = hole_mask(32, 20)
    with no_grad():
        _, _, _, trace = run_mpr(c, Tensor(features(m)), m)
    for a, b in zip(trace.entries, trace.entries[1:]):
        assert np.all(b.mask >= a.mask)


def test_trace_rejects_shrinking_mask():
    t = RecurrenceTrace()
    t.append(TraceEntry(Tensor(np.ones((1, 1, 2, 2))), np.ones((1, 1, 2, 2)), SFR))
    with pytest.raises(RuntimeError):
        t.append(TraceEntry(Tensor(np.ones((1, 1, 2, 2))), np.zeros((1, 1, 2, 2)), SFR))


def merge_trace(values_masks):
    t = RecurrenceTrace()
    for stage, v, m in values_masks:
        t.append(TraceEntry(Tensor(np.full((1, 1, 1, 2), v)), np.asarray(m, float).reshape(1, 1, 1, 2), stage))
    return t


def test_adaptive_merge_examples():
    t = merge_trace([(SFR, 2.0, [1, 0]), (SFR, 4.0, [1, 0]), (TFR, 5.0, [1, 1])])
    fs, ft = adaptive_merge(t, 0.5)
    assert fs.data[0, 0, 0, 0] == 1.5
    assert fs.data[0, 0, 0, 1] == 0.0  # never valid
    assert np.all(ft.data == 2.5)
    t1 = merge_trace([(SFR, 3.0, [1, 1]), (TFR, 3.0, [1, 1])])
    fs, ft = adaptive_merge(t1, 0.25)
    assert np.all(fs.data == 0.75)
    _, ft = adaptive_merge(t1, 1.0)
    assert np.all(ft.data == 0.0)


def test_merge_needs_both_stages():
    with pytest.raises(ValueError):
        adaptive_merge(merge_trace([(SFR, 1.0, [1, 1])]), 0.5)


def test_beta_to_one_zeroes_texture_stream():
    c = core()
    c.beta_raw.data[...] = 40.0
    m = hole_mask(16, 4)
    with no_grad():
        _, ft, _, _ = run_mpr(c, Tensor(features(m)), m)
    assert np.max(np.abs(ft.data)) < 1e-12


def test_run_deterministic():
    m = hole_mask(16, 6)
    outs = []
    for _ in range(2):
        c = core(seed=3)
        with no_grad():
            fs, ft, _, _ = run_mpr(c, Tensor(features(m)), m)
        outs.append((fs.data, ft.data))
    assert np.array_equal(outs[0][0], outs[1][0]) and np.array_equal(outs[0][1], outs[1][1])


def test_weight_tying_controls_parameter_count():
    tied = len(core(weight_tied=True).parameters())
    untied = len(core(weight_tied=False).parameters())
    # 4 pconvs (weight + bias) shared vs 16, plus attention and beta
    assert untied - tied == (16 - 4) * 2


def test_unclosed_holes_pass_through_as_zero():
    c = core(sfr_iterations=1, tfr_iterations=1, sfr_dilation=1)
    m = hole_mask(32, 20)
    with no_grad():
        fs, ft, final, _ = run_mpr(c, Tensor(features(m)), m)
    assert not np.all(final == 1)
    hole = final[0, 0] == 0
    assert np.all(fs.data[0][:, hole] == 0) and np.all(ft.data[0][:, hole] == 0)
