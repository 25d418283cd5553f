"""Post-norm transformer encoder with sinusoidal positions."""
from __future__ import annotations

import numpy as np

from . import tensor as tn
from .errors import DimensionError
from .tensor import Rng, Tensor


def positional_encoding(length: int, width: int) -> np.ndarray:
    """Even columns sin(pos / 10000^(2i/width)), odd columns the matching cos."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(0, width, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, i / width)
    pe = np.zeros((length, width))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : width // 2])
    return pe


class EncoderLayer:
    def __init__(self, c2, heads, ff_mult, rng: Rng, prefix):
        if c2 % heads:
            raise DimensionError(f"width {c2} not divisible by {heads} heads")
        self.c2, self.heads, self.prefix = c2, heads, prefix
        hidden = ff_mult * c2
        p = {}
        for name in ("q", "k", "v", "o"):
            p[f"{prefix}.attn.{name}.w"] = tn.uniform_init(rng, (c2, c2), c2)
            p[f"{prefix}.attn.{name}.b"] = tn.zeros_param(c2)
        p[f"{prefix}.ff1.w"] = tn.uniform_init(rng, (c2, hidden), c2)
        p[f"{prefix}.ff1.b"] = tn.zeros_param(hidden)
        p[f"{prefix}.ff2.w"] = tn.uniform_init(rng, (hidden, c2), hidden)
        p[f"{prefix}.ff2.b"] = tn.zeros_param(c2)
        for n in ("ln1", "ln2"):
            p[f"{prefix}.{n}.g"] = tn.ones_param(c2)
            p[f"{prefix}.{n}.b"] = tn.zeros_param(c2)
        self.params = p
        self.last_attention = None

    def _p(self, name):
        return self.params[f"{self.prefix}.{name}"]

    def mhsa(self, x: Tensor) -> Tensor:
        return mhsa(x, self)

    def __call__(self, x: Tensor) -> Tensor:
        h = tn.layer_norm(x + self.mhsa(x), self._p("ln1.g"), self._p("ln1.b"))
        f = tn.linear(tn.relu(tn.linear(h, self._p("ff1.w"), self._p("ff1.b"))), self._p("ff2.w"), self._p("ff2.b"))
        return tn.layer_norm(h + f, self._p("ln2.g"), self._p("ln2.b"))


def mhsa(x: Tensor, layer: EncoderLayer) -> Tensor:
    t, c = x.shape
    if c != layer.c2:
        raise DimensionError(f"mhsa: input width {c} (axis 1) != {layer.c2}")
    h = layer.heads
    d = c // h

    def heads_first(z):  # T x c -> h x T x d
        return tn.transpose(tn.reshape(z, (t, h, d)), (1, 0, 2))

    q = heads_first(tn.linear(x, layer._p("attn.q.w"), layer._p("attn.q.b")))
    k = heads_first(tn.linear(x, layer._p("attn.k.w"), layer._p("attn.k.b")))
    v = heads_first(tn.linear(x, layer._p("attn.v.w"), layer._p("attn.v.b")))
    scores = tn.scale(tn.matmul(q, tn.transpose(k, (0, 2, 1))), 1.0 / np.sqrt(d))
    attn = tn.softmax_rows(scores)
    layer.last_attention = attn.data
    ctx = tn.reshape(tn.transpose(tn.matmul(attn, v), (1, 0, 2)), (t, c))
    return tn.linear(ctx, layer._p("attn.o.w"), layer._p("attn.o.b"))


class TransformerEncoder:
    def __init__(self, c2, heads, ff_mult, num_layers, rng: Rng, use_pe=True):
        self.c2 = c2
        self.layers = [EncoderLayer(c2, heads, ff_mult, rng, f"enc{i}") for i in range(num_layers)]
        self.params = {}
        for layer in self.layers:
            self.params.update(layer.params)
        self.use_pe = use_pe
        self._pe = positional_encoding(64, c2)

    def pe(self, length):
        if length > self._pe.shape[0]:
            size = self._pe.shape[0]
            while size < length:
                size *= 2
            self._pe = positional_encoding(size, self.c2)
        return self._pe[:length]

    def __call__(self, x: Tensor) -> Tensor:
        return encode(x, self)


def encode(level3: Tensor, enc: TransformerEncoder) -> Tensor:
    h = level3 + enc.pe(level3.shape[0]) if enc.use_pe else level3
    for layer in enc.layers:
        h = layer(h)
    return h
