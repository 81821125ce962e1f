"""Adam optimiser with checkpointable state."""
from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, named_params, lr=1e-4, b1=0.9, b2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = list(named_params)
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params}

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad()

    def step(self):
        self.t += 1
        b1, b2 = self.b1, self.b2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for name, p in self.params:
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            step = (self.lr / corr1) * m / (np.sqrt(v / corr2) + self.eps)
            p.data -= step.astype(p.dtype)

    def state(self):
        out = {"adam.t": np.array([self.t], dtype=np.float32)}
        for name, _ in self.params:
            out[f"adam.m/{name}"] = self.m[name]
            out[f"adam.v/{name}"] = self.v[name]
        return out

    def load_state(self, entries):
        if "adam.t" not in entries:
            return False
        staged_m, staged_v = {}, {}
        for name, p in self.params:
            for key, staged in ((f"adam.m/{name}", staged_m), (f"adam.v/{name}", staged_v)):
                if key not in entries:
                    raise ValueError(f"optimizer state is missing {key!r}")
                staged[name] = entries[key].astype(p.dtype)
        self.t = int(entries["adam.t"].reshape(-1)[0])
        self.m, self.v = staged_m, staged_v
        return True
