"""Frame-wise feature extraction: embedder, gradient stop, FC stack."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .errors import ContractError, DimensionError
from .tensor import Rng, Tensor


@dataclass
class FeatureSequence:
    """Time-major T x D_in frames; ``length`` counts the real (unpadded) frames."""

    frames: np.ndarray
    length: int
    sample_id: str = ""

    @property
    def padded_len(self) -> int:
        return self.frames.shape[0]


def pad_frames(frames: np.ndarray, multiple: int = 4) -> np.ndarray:
    """Append zero frames until the length is a positive multiple of ``multiple``."""
    t = frames.shape[0]
    target = max(multiple, -(-t // multiple) * multiple)
    if target == t:
        return frames
    return np.concatenate([frames, np.zeros((target - t, frames.shape[1]))], axis=0)


def stochastic_gradient_stop(x: Tensor, p: float, rng: Rng | None, training: bool):
    """Leave values untouched; in training, block the gradient of each frame with probability p.

    Returns the output tensor and the boolean mask of stopped frames.
    """
    if not 0.0 <= p <= 1.0:
        raise ContractError(f"stop probability must lie in [0, 1], got {p}")
    t = x.shape[0]
    if not training or p == 0.0:
        return x, np.zeros(t, dtype=bool)
    stopped = np.ones(t, dtype=bool) if p == 1.0 else rng.random(t) < p
    return tn.gradient_stop(x, ~stopped), stopped


class FrameEncoder:
    """Linear+ReLU embedder (D_in -> c1) followed by ``fc_layers`` fully connected layers ending at c2."""

    def __init__(self, cfg, rng: Rng):
        self.d_in = cfg.d_in
        self.grad_stop_p = cfg.grad_stop_p
        width = cfg.embed_width
        self.params = {
            "embed.w": tn.uniform_init(rng, (cfg.d_in, width), cfg.d_in),
            "embed.b": tn.zeros_param(width),
        }
        self.n_fc = cfg.fc_layers
        dims = [width] + [cfg.c2] * cfg.fc_layers
        for i in range(cfg.fc_layers):
            self.params[f"fc{i}.w"] = tn.uniform_init(rng, (dims[i], dims[i + 1]), dims[i])
            self.params[f"fc{i}.b"] = tn.zeros_param(dims[i + 1])

    def embed(self, frames: Tensor) -> Tensor:
        if frames.shape[1] != self.d_in:
            raise DimensionError(f"frames have {frames.shape[1]} features (axis 1), config d_in={self.d_in}")
        return tn.relu(tn.linear(frames, self.params["embed.w"], self.params["embed.b"]))

    def fc_stack(self, h: Tensor) -> Tensor:
        for i in range(self.n_fc):
            if i:
                h = tn.relu(h)
            h = tn.linear(h, self.params[f"fc{i}.w"], self.params[f"fc{i}.b"])
        return h

    def __call__(self, frames, training=False, rng: Rng | None = None, stop_p=None) -> Tensor:
        """First-level gloss features, T x c2."""
        if not isinstance(frames, Tensor):
            frames = Tensor(frames)
        h = self.embed(frames)
        p = self.grad_stop_p if stop_p is None else stop_p
        h, _ = stochastic_gradient_stop(h, p, rng, training)
        return self.fc_stack(h)


def encode_frames(seq: FeatureSequence, encoder: FrameEncoder, training=False, rng=None) -> Tensor:
    if seq.padded_len < 4 or seq.padded_len % 4:
        raise ContractError(f"sequence length {seq.padded_len} must be a positive multiple of 4; pad first")
    return encoder(seq.frames, training=training, rng=rng)
