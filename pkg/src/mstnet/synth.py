"""Toy sign-language corpus: glosses realised with variable durations.

Each gloss owns a prototype trajectory of a fixed number of frames. A sample
draws a gloss sequence, time-warps every occurrence by its own factor and adds
Gaussian noise, so the same gloss spans a different number of frames from one
sample to the next.

Corpus files are little-endian::

    magic  b"MSTC"   version u8   count u32
    per record: T u32, L u32, D_in u32, T*D_in float32 frames, L uint32 gloss ids

Frames are stored unpadded; :func:`read_corpus` pads them again.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ctc import min_frames
from .errors import ContractError, DataError
from .frames import FeatureSequence, pad_frames
from .tensor import Rng

SPLITS = {"train": 0, "dev": 1, "test": 2}
WARP_RANGE = (0.8, 1.25)
CORPUS_MAGIC = b"MSTC"
CORPUS_VERSION = 1


@dataclass
class Sample:
    features: FeatureSequence
    target: tuple
    frame_labels: np.ndarray | None = None  # gloss id per real frame, for diagnostics


@dataclass
class ToyGrammar:
    vocab_size: int = 10
    d_in: int = 16
    len_min: int = 4
    len_max: int = 12
    noise_sigma: float = 0.05
    sentence_len_range: tuple = (2, 5)
    seed: int = 0
    pad_multiple: int = 4
    prototypes: list = field(init=False, repr=False)

    def __post_init__(self):
        if self.vocab_size < 1 or self.d_in < 1:
            raise ContractError("vocab_size and d_in must be positive")
        if not 1 <= self.len_min <= self.len_max:
            raise ContractError("need 1 <= len_min <= len_max")
        lo, hi = self.sentence_len_range
        if not 1 <= lo <= hi:
            raise ContractError("need 1 <= min sentence length <= max sentence length")
        rng = Rng([self.seed, 0xC0FFEE])
        protos = []
        for _ in range(self.vocab_size):
            n = int(rng.integers(self.len_min, self.len_max + 1))
            # a smooth motion: piecewise-linear through three random key poses
            keys = rng.normal(1.0, (3, self.d_in))
            u = np.linspace(0.0, 2.0, n)[:, None]
            first = keys[0] + (keys[1] - keys[0]) * np.minimum(u, 1.0)
            protos.append(first + (keys[2] - keys[1]) * np.maximum(u - 1.0, 0.0))
        self.prototypes = protos


def warp_indices(n: int, factor: float) -> np.ndarray:
    """Frame indices realising an ``n``-frame segment at ``factor`` times its length."""
    new_len = max(1, int(round(n * factor)))
    return np.floor(np.arange(new_len) * n / new_len).astype(np.int64)


def _realise(grammar: ToyGrammar, rng: Rng):
    lo, hi = grammar.sentence_len_range
    length = int(rng.integers(lo, hi + 1))
    target = tuple(int(g) for g in rng.integers(0, grammar.vocab_size, length))
    chunks, labels = [], []
    log_lo, log_hi = math.log(WARP_RANGE[0]), math.log(WARP_RANGE[1])
    for g in target:
        proto = grammar.prototypes[g]
        factor = math.exp(rng.uniform(log_lo, log_hi))
        seg = proto[warp_indices(len(proto), factor)]
        chunks.append(seg)
        labels.append(np.full(len(seg), g))
    frames = np.concatenate(chunks, axis=0)
    frames = frames + rng.normal(grammar.noise_sigma, frames.shape)
    # keep values float32-representable so corpus files round-trip exactly
    frames = frames.astype(np.float32).astype(np.float64)
    return frames, target, np.concatenate(labels)


def generate_one(grammar: ToyGrammar, index: int, split: str = "train", max_tries: int = 100) -> Sample:
    """Sample ``index`` of ``split``; a pure function of (grammar, split, index).

    Realisations too short for a CTC alignment after the full temporal
    downsampling are redrawn.
    """
    if split not in SPLITS:
        raise ContractError(f"split must be one of {sorted(SPLITS)}")
    for attempt in range(max_tries):
        rng = Rng([grammar.seed, SPLITS[split], index, attempt])
        frames, target, labels = _realise(grammar, rng)
        coarse = -(-frames.shape[0] // grammar.pad_multiple)
        if coarse >= min_frames(target):
            break
    else:
        raise DataError(f"could not draw a feasible sample {split}/{index}")
    seq = FeatureSequence(pad_frames(frames, grammar.pad_multiple), frames.shape[0], f"{split}-{index}")
    return Sample(seq, target, labels)


def generate(grammar: ToyGrammar, count: int, split: str = "train") -> list:
    if count < 1:
        raise ContractError("count must be >= 1")
    return [generate_one(grammar, i, split) for i in range(count)]


def temporal_augment(seq: FeatureSequence, rng: Rng, max_frac: float = 0.2, pad_multiple: int = 4) -> FeatureSequence:
    """Stretch or shrink the real frames to a uniformly drawn length within +-max_frac.

    Frames are duplicated or dropped at evenly spaced positions, so the order of
    the surviving frames is preserved.
    """
    if not 0.0 <= max_frac < 1.0:
        raise ContractError("max_frac must lie in [0, 1)")
    t = seq.length
    lo = max(1, math.ceil(t * (1.0 - max_frac) - 1e-9))
    hi = max(lo, math.floor(t * (1.0 + max_frac) + 1e-9))
    new_len = int(rng.integers(lo, hi + 1))
    idx = np.floor(np.arange(new_len) * t / new_len).astype(np.int64)
    frames = seq.frames[:t][idx]
    return FeatureSequence(pad_frames(frames, pad_multiple), new_len, seq.sample_id)


# ---------------------------------------------------------------------------
# corpus files


def write_corpus(path, samples) -> None:
    with open(path, "wb") as fh:
        fh.write(CORPUS_MAGIC + struct.pack("<BI", CORPUS_VERSION, len(samples)))
        for s in samples:
            frames = s.features.frames[: s.features.length]
            t, d = frames.shape
            fh.write(struct.pack("<III", t, len(s.target), d))
            fh.write(frames.astype("<f4").tobytes())
            fh.write(np.asarray(s.target, dtype="<u4").tobytes())


def read_corpus(path, pad_multiple: int = 4) -> list:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from exc
    if blob[:4] != CORPUS_MAGIC:
        raise DataError(f"{path}: not a corpus file")
    version, count = struct.unpack_from("<BI", blob, 4)
    if version != CORPUS_VERSION:
        raise DataError(f"{path}: unsupported corpus version {version}")
    off = 9
    out = []
    stem = Path(path).stem
    try:
        for i in range(count):
            t, n_lab, d = struct.unpack_from("<III", blob, off)
            off += 12
            frames = np.frombuffer(blob, dtype="<f4", count=t * d, offset=off).reshape(t, d).astype(np.float64)
            off += 4 * t * d
            target = tuple(int(x) for x in np.frombuffer(blob, dtype="<u4", count=n_lab, offset=off))
            off += 4 * n_lab
            out.append(Sample(FeatureSequence(pad_frames(frames, pad_multiple), t, f"{stem}-{i}"), target))
    except (struct.error, ValueError) as exc:
        raise DataError(f"{path}: truncated corpus file") from exc
    return out
