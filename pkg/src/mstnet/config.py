"""Model and training hyperparameters.

Defaults are the desk-scale settings. :meth:`ModelConfig.full_size` returns the
full-size values (512/1024 channels, eight heads, lr 1e-4 ...).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .errors import ConfigError

ENCODERS = ("transformer", "none", "bilstm")


@dataclass
class ModelConfig:
    d_in: int = 16
    c1: int = 32
    c2: int = 64
    fc_layers: int = 2
    num_scales: int = 4
    num_mst_blocks: int = 2
    encoder: str = "transformer"
    encoder_layers: int = 2
    heads: int = 8
    ff_mult: int = 4
    ctc_levels: int = 4
    vocab_size: int = 10
    fusion_relu: bool = True
    shared_head: bool = False
    grad_stop_p: float = 0.5
    aug_frac: float = 0.2
    lr: float = 1e-4
    weight_decay: float = 1e-4
    lr_drops: tuple = ((40, 0.2), (50, 0.2))
    epochs: int = 60
    batch_size: int = 2
    beam_width: int = 10
    seed: int = 0

    def __post_init__(self):
        self.lr_drops = tuple((int(e), float(f)) for e, f in self.lr_drops)

    @classmethod
    def full_size(cls, **overrides):
        base = dict(d_in=512, c1=512, c2=1024, heads=8, lr=1e-4, weight_decay=1e-4, vocab_size=1232)
        base.update(overrides)
        return cls(**base)

    @property
    def num_levels(self) -> int:
        # frame features, one level per MST block, encoder output
        return self.num_mst_blocks + 2

    @property
    def downsample(self) -> int:
        return 2**self.num_mst_blocks

    @property
    def kernel_sizes(self) -> list:
        return [3 + 2 * i for i in range(self.num_scales)]

    @property
    def embed_width(self) -> int:
        """Frame embedder output width; with no FC layers the embedder feeds c2 directly."""
        return self.c2 if self.fc_layers == 0 else self.c1

    def validate(self) -> "ModelConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.d_in >= 1 and self.c1 >= 1 and self.c2 >= 2, "d_in, c1 must be >= 1 and c2 >= 2")
        need(self.fc_layers >= 0, "fc_layers must be >= 0")
        need(self.num_scales >= 1, "num_scales must be >= 1")
        need(self.num_mst_blocks >= 0, "num_mst_blocks must be >= 0")
        need(self.encoder in ENCODERS, f"encoder must be one of {ENCODERS}")
        need(self.encoder != "bilstm", "the bilstm encoder is not implemented")
        need(self.encoder_layers >= 0, "encoder_layers must be >= 0")
        need(self.heads >= 1 and self.c2 % self.heads == 0, f"c2={self.c2} not divisible by heads={self.heads}")
        need(self.ff_mult >= 1, "ff_mult must be >= 1")
        need(1 <= self.ctc_levels <= self.num_levels, f"ctc_levels must be in 1..{self.num_levels}")
        need(self.vocab_size >= 1, "vocab_size must be >= 1")
        need(0.0 <= self.grad_stop_p <= 1.0, "grad_stop_p must be in [0, 1]")
        need(0.0 <= self.aug_frac < 1.0, "aug_frac must be in [0, 1)")
        need(self.lr > 0 and self.weight_decay >= 0, "lr must be > 0 and weight_decay >= 0")
        need(self.epochs >= 0 and self.batch_size >= 1, "epochs >= 0 and batch_size >= 1 required")
        need(self.beam_width >= 1, "beam_width must be >= 1")
        return self

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    # -- text form ---------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: "ModelConfig | None" = None) -> "ModelConfig":
        values = parse_assignments(text)
        return (base or cls()).updated(values)

    def updated(self, values: dict) -> "ModelConfig":
        """Copy with string values parsed into the field types."""
        kinds = {f.name: f for f in fields(self)}
        changes = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            changes[key] = parse_value(key, kinds[key].default, raw)
        return self.replace(**changes)


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(f"{e}:{f!r}" for e, f in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_value(key, default, raw):
    raw = raw.strip() if isinstance(raw, str) else raw
    if not isinstance(raw, str):
        return raw
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            if not raw:
                return ()
            pairs = []
            for item in raw.split(","):
                e, f = item.split(":")
                pairs.append((int(e), float(f)))
            return tuple(pairs)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


def parse_assignments(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path, base: ModelConfig | None = None) -> ModelConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return ModelConfig.from_text(text, base)
