"""The full network: frame encoder, MST blocks, transformer, per-level classifiers."""
from __future__ import annotations

import math

import numpy as np

from . import tensor as tn
from .config import ModelConfig
from .ctc import LevelLogits, multi_level_ctc, retained_levels
from .errors import DimensionError
from .frames import FeatureSequence, FrameEncoder, pad_frames
from .mst import MstBlock
from .tensor import Rng, Tensor
from .transformer import TransformerEncoder


class MSTNet:
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg.validate()
        rng = Rng([cfg.seed, 0x1A17])
        self.frames = FrameEncoder(cfg, rng.spawn(1))
        brng = rng.spawn(2)
        self.blocks = [
            MstBlock(cfg.c2, cfg.num_scales, brng.spawn(i), cfg.fusion_relu, prefix=f"mst{i}")
            for i in range(cfg.num_mst_blocks)
        ]
        self.encoder = None
        if cfg.encoder == "transformer":
            self.encoder = TransformerEncoder(cfg.c2, cfg.heads, cfg.ff_mult, cfg.encoder_layers, rng.spawn(3))
        n_cls = cfg.vocab_size + 1
        hrng = rng.spawn(4)
        self.heads = {}
        for lvl in range(1, cfg.num_levels + 1):
            key = "head" if cfg.shared_head else f"head{lvl}"
            if key not in self.heads:
                self.heads[key] = (
                    tn.uniform_init(hrng.spawn(lvl), (cfg.c2, n_cls), cfg.c2),
                    tn.zeros_param(n_cls),
                )

    # -- parameters --------------------------------------------------------

    def named_parameters(self) -> dict:
        params = {}
        params.update({f"frame.{k}": v for k, v in self.frames.params.items()})
        for b in self.blocks:
            params.update(b.params)
        if self.encoder is not None:
            params.update(self.encoder.params)
        for key, (w, b) in self.heads.items():
            params[f"{key}.w"] = w
            params[f"{key}.b"] = b
        return params

    def state_arrays(self) -> dict:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_arrays(self, arrays: dict) -> None:
        params = self.named_parameters()
        missing = set(params) - set(arrays)
        if missing:
            raise DimensionError(f"checkpoint lacks parameters {sorted(missing)}")
        for k, p in params.items():
            a = np.asarray(arrays[k], dtype=np.float64)
            if a.shape != p.shape:
                raise DimensionError(f"parameter {k}: checkpoint shape {a.shape} != model shape {p.shape}")
            p.data = a.copy()
            p.grad = np.zeros_like(p.data)

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.named_parameters().values())

    # -- forward -----------------------------------------------------------

    def valid_lengths(self, length: int) -> list:
        lens = [length]
        for _ in self.blocks:
            lens.append(math.ceil(lens[-1] / 2))
        lens.append(lens[-1])
        return lens

    def features(self, seq: FeatureSequence, training=False, rng: Rng | None = None, stop_p=None) -> list:
        """Gloss features of every level: frame, one per MST block, encoder output."""
        frames = seq.frames
        if frames.shape[0] % self.cfg.downsample or frames.shape[0] == 0:
            frames = pad_frames(frames[: seq.length], self.cfg.downsample)
        h = self.frames(frames, training=training, rng=rng, stop_p=stop_p)
        levels = [h]
        for b in self.blocks:
            h = b(h)
            levels.append(h)
        levels.append(self.encoder(h) if self.encoder is not None else h)
        return levels

    def head(self, level: int):
        return self.heads["head" if self.cfg.shared_head else f"head{level}"]

    def forward(self, seq: FeatureSequence, training=False, rng: Rng | None = None, levels=None, stop_p=None) -> list:
        """Per-level logits; ``None`` in place of levels not listed in ``levels`` (1-based)."""
        feats = self.features(seq, training, rng, stop_p)
        lens = self.valid_lengths(seq.length)
        wanted = set(range(1, len(feats) + 1)) if levels is None else set(levels)
        out = []
        for i, (f, n) in enumerate(zip(feats, lens), 1):
            if i in wanted:
                w, b = self.head(i)
                out.append(LevelLogits(tn.linear(f, w, b), n))
            else:
                out.append(None)
        return out

    def trained_levels(self) -> list:
        return [i + 1 for i in retained_levels(self.cfg.num_levels, self.cfg.ctc_levels)]

    def loss(self, seq: FeatureSequence, target, training=False, rng=None, stop_p=None) -> Tensor:
        logits = self.forward(seq, training, rng, levels=self.trained_levels(), stop_p=stop_p)
        return multi_level_ctc(logits, target, self.cfg.ctc_levels)

    def decode_logits(self, seq: FeatureSequence) -> LevelLogits:
        """Deepest-level logits, the only ones used for recognition."""
        return self.forward(seq, levels=[self.cfg.num_levels])[-1]
