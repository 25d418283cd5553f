"""Binary checkpoint format.

Layout (little-endian)::

    b"MSTN" | version u8
    u32 n + n bytes   config, ``key = value`` text (UTF-8)
    u32 n + n bytes   training state, canonical JSON (epoch, rng state, Adam step, log)
    u32 count
    per array: u16 name length, name (UTF-8), u8 ndim, ndim x u32 dims, float64 data

Arrays are written in sorted name order: ``param/<name>`` for weights,
``adam_m/<name>`` and ``adam_v/<name>`` for the optimizer moments.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .config import ModelConfig
from .errors import DataError

MAGIC = b"MSTN"
VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    adam_step: int = 0
    epoch: int = 0
    rng_state: dict | None = None
    extra: dict = field(default_factory=dict)  # log history, best-dev bookkeeping
    version: int = VERSION

    def arrays(self) -> dict:
        out = {f"param/{k}": v for k, v in self.params.items()}
        out.update({f"adam_m/{k}": v for k, v in self.adam_m.items()})
        out.update({f"adam_v/{k}": v for k, v in self.adam_v.items()})
        return out


def _u32_block(data: bytes) -> bytes:
    return struct.pack("<I", len(data)) + data


def dumps(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<B", ckpt.version)]
    parts.append(_u32_block(ckpt.config.to_text().encode("utf-8")))
    state = {
        "epoch": ckpt.epoch,
        "adam_step": ckpt.adam_step,
        "rng_state": ckpt.rng_state,
        "extra": ckpt.extra,
    }
    parts.append(_u32_block(json.dumps(state, sort_keys=True, separators=(",", ":")).encode("utf-8")))
    arrays = ckpt.arrays()
    parts.append(struct.pack("<I", len(arrays)))
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> Checkpoint:
    if blob[:4] != MAGIC:
        raise DataError("not a checkpoint (bad magic)")
    try:
        (version,) = struct.unpack_from("<B", blob, 4)
        if version != VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        off = 5
        (n,) = struct.unpack_from("<I", blob, off)
        config = ModelConfig.from_text(blob[off + 4 : off + 4 + n].decode("utf-8"))
        off += 4 + n
        (n,) = struct.unpack_from("<I", blob, off)
        state = json.loads(blob[off + 4 : off + 4 + n].decode("utf-8"))
        off += 4 + n
        (count,) = struct.unpack_from("<I", blob, off)
        off += 4
        groups = {"param": {}, "adam_m": {}, "adam_v": {}}
        for _ in range(count):
            (ln,) = struct.unpack_from("<H", blob, off)
            name = blob[off + 2 : off + 2 + ln].decode("utf-8")
            off += 2 + ln
            (ndim,) = struct.unpack_from("<B", blob, off)
            shape = struct.unpack_from(f"<{ndim}I", blob, off + 1)
            off += 1 + 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            a = np.frombuffer(blob, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
            off += 8 * size
            kind, key = name.split("/", 1)
            groups[kind][key] = a
    except (struct.error, ValueError, KeyError, UnicodeDecodeError) as exc:
        raise DataError(f"corrupt checkpoint: {exc}") from exc
    return Checkpoint(
        config=config,
        params=groups["param"],
        adam_m=groups["adam_m"],
        adam_v=groups["adam_v"],
        adam_step=state["adam_step"],
        epoch=state["epoch"],
        rng_state=state["rng_state"],
        extra=state["extra"],
        version=version,
    )


def save(ckpt: Checkpoint, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(ckpt))


def load(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            return loads(fh.read())
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
