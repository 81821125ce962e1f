"""Binary checkpoint format.

Layout (all integers little-endian u32)::

    b"MPRN" | version | entry count
    per entry: name length | utf-8 name | rank | dims... | float32 payload
    CRC32 of every preceding byte

Loading validates the whole file before returning anything.
"""
from __future__ import annotations

import os
import struct
import zlib

import numpy as np

MAGIC = b"MPRN"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode(entries):
    names = list(entries)
    if len(set(names)) != len(names):
        raise CheckpointError("parameter names must be unique")
    parts = [MAGIC, struct.pack("<II", VERSION, len(names))]
    for name in names:
        arr = np.asarray(entries[name])
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode(blob):
    if len(blob) < 16:
        raise CheckpointError("checkpoint truncated")
    if blob[:4] != MAGIC:
        raise CheckpointError("bad magic bytes; not an MPRN checkpoint")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    version, count = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError("CRC mismatch; checkpoint is corrupt")
    pos = 12
    out = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", body, pos)
            pos += 4
            name = body[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", body, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", body, pos)
            pos += 4 * rank
            nbytes = 4 * int(np.prod(dims, dtype=np.int64))
            if pos + nbytes > len(body):
                raise CheckpointError(f"entry {name!r} runs past the end of the file")
            out[name] = np.frombuffer(body, dtype="<f4", count=nbytes // 4, offset=pos).reshape(dims).astype(np.float32)
            pos += nbytes
    except struct.error as exc:
        raise CheckpointError(f"checkpoint truncated: {exc}") from exc
    if pos != len(body):
        raise CheckpointError("trailing bytes after the last entry")
    return out


def save_checkpoint(entries, path):
    blob = encode(entries)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return decode(fh.read())


def apply_to(module, entries, prefix=""):
    """Copy entries into a module's parameters; all-or-nothing."""
    params = dict(module.named_parameters())
    staged = {}
    for name, p in params.items():
        key = prefix + name
        if key not in entries:
            raise CheckpointError(f"checkpoint has no entry {key!r}")
        val = entries[key]
        if val.shape != p.shape:
            raise CheckpointError(f"entry {key!r} has shape {val.shape}, model expects {p.shape}")
        staged[name] = val
    for name, val in staged.items():
        params[name].data[...] = val.astype(params[name].dtype)
