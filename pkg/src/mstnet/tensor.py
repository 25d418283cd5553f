"""Dense float64 arrays with define-by-run reverse-mode differentiation.

Only the operations the recognition pipeline needs are provided. Every op
builds its output with :func:`_node`, which records the parents and a
closure mapping the output gradient to one gradient per parent. Calling
:func:`backward` on a scalar walks that tape in reverse topological order,
accumulates into leaf ``.grad`` arrays and then drops the tape.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DimensionError, NumericError

_DEBUG = False


def set_debug(flag: bool) -> None:
    """Check every forward result for NaN/Inf when enabled."""
    global _DEBUG
    _DEBUG = bool(flag)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def is_leaf(self):
        return self._backward is None

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        backward(self)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward_fn):
    """Wrap ``data`` as an op output; record the tape only if a parent needs grads."""
    if _DEBUG and not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite value produced by {backward_fn.__qualname__}")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every leaf reachable from the scalar ``loss``."""
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if node._backward is None:
            if g is not None:
                node.grad = node.grad + g if node.grad is not None else g.copy()
            continue
        if g is None:
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
        # free the tape as we go
        node._parents = ()
        node._backward = None


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and structural ops


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape

    def _back(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _node(a.data + b.data, (a, b), _back)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data

    def _back(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _node(ad * bd, (a, b), _back)


def scale(a: Tensor, c: float):
    return _node(a.data * c, (a,), lambda g: (g * c,))


def neg(a: Tensor):
    return _node(-a.data, (a,), lambda g: (-g,))


def relu(a: Tensor):
    mask = a.data > 0
    # np.maximum keeps NaN visible instead of mapping it to zero
    return _node(np.maximum(a.data, 0.0), (a,), lambda g: (g * mask,))


def matmul(a: Tensor, b: Tensor):
    """``np.matmul`` semantics for 2-D and equally batched 3-D operands."""
    ad, bd = a.data, b.data
    if ad.shape[-1] != bd.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions differ: {ad.shape[-1]} (axis -1 of left) "
            f"vs {bd.shape[-2]} (axis -2 of right)"
        )

    def _back(g):
        return g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g

    return _node(ad @ bd, (a, b), _back)


def transpose(a: Tensor, axes=None):
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _node(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def reshape(a: Tensor, shape):
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def stack(tensors, axis=0):
    def _back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _node(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), _back)


def sum(a: Tensor):  # noqa: A001 - mirrors numpy naming
    shape = a.shape
    return _node(np.array(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(a: Tensor):
    n = a.data.size
    return scale(sum(a), 1.0 / n)


def gradient_stop(a: Tensor, keep_rows):
    """Identity forward; backward zeroes the gradient of rows where ``keep_rows`` is False."""
    keep = np.asarray(keep_rows, dtype=np.float64).reshape((-1,) + (1,) * (a.ndim - 1))
    return _node(a.data.copy(), (a,), lambda g: (g * keep,))


# ---------------------------------------------------------------------------
# layers


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None):
    """Row-wise affine map ``x @ weight + bias`` for ``x`` of shape T x C_in."""
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(
            f"linear: input has {x.shape[-1]} features (axis 1), weight expects "
            f"{weight.shape[0]} (axis 0)"
        )
    xd, wd = x.data, weight.data
    out = xd @ wd
    if bias is not None:
        if bias.shape != (wd.shape[1],):
            raise DimensionError(f"linear: bias shape {bias.shape} != ({wd.shape[1]},)")
        out = out + bias.data

    def _back(g):
        gb = g.sum(axis=0) if bias is not None else None
        return g @ wd.T, xd.T @ g, gb

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return _node(out, parents, _back)


def softmax_rows(x: Tensor):
    """Softmax over the last axis, max-subtracted."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def _back(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _node(y, (x,), _back)


def log_softmax_rows(x: Tensor):
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse

    def _back(g):
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return _node(y, (x,), _back)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5):
    """Normalise each row to zero mean and unit (biased) variance, then scale and shift."""
    c = x.shape[-1]
    if c < 2:
        raise DimensionError("layer_norm needs at least 2 features per row")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gamma.data

    def _back(g):
        dgamma = (g * xhat).sum(axis=0)
        dbeta = g.sum(axis=0)
        dxhat = g * gd
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, dgamma, dbeta

    return _node(xhat * gd + beta.data, (x, gamma, beta), _back)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None, padding: int = 0, stride: int = 1):
    """Cross-correlation of a C_in x T signal with C_out x C_in x K kernels.

    Borders are zero-padded by ``padding`` frames on each side. Output length is
    ``(T + 2*padding - K) // stride + 1``.
    """
    if x.ndim != 2 or weight.ndim != 3:
        raise DimensionError(f"conv1d expects input C_in x T and weight C_out x C_in x K, got {x.shape}, {weight.shape}")
    c_in, t = x.shape
    c_out, w_in, k = weight.shape
    if w_in != c_in:
        raise DimensionError(f"conv1d: input channels (axis 0) = {c_in}, weight in-channels (axis 1) = {w_in}")
    if k < 1 or padding < 0 or stride < 1:
        raise ContractError(f"conv1d: bad kernel/padding/stride ({k}, {padding}, {stride})")
    if t + 2 * padding < k:
        raise DimensionError(f"conv1d: padded length {t + 2 * padding} (axis 1) shorter than kernel {k}")
    xp = np.pad(x.data, ((0, 0), (padding, padding))) if padding else x.data
    t_out = (t + 2 * padding - k) // stride + 1
    cols = sliding_window_view(xp, k, axis=1)[:, ::stride][:, :t_out]  # C_in x T_out x K
    wd = weight.data
    out = np.einsum("itk,oik->ot", cols, wd, optimize=True)
    if bias is not None:
        out = out + bias.data[:, None]

    def _back(g):
        gw = np.einsum("ot,itk->oik", g, cols, optimize=True)
        gcols = np.einsum("ot,oik->itk", g, wd, optimize=True)
        gxp = np.zeros_like(xp)
        span = stride * (t_out - 1) + 1
        for j in range(k):
            gxp[:, j : j + span : stride] += gcols[:, :, j]
        gx = gxp[:, padding : padding + t] if padding else gxp
        gb = g.sum(axis=1) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return _node(out, parents, _back)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None, stride_h: int = 1, stride_w: int = 1):
    """Unpadded 2-D cross-correlation of C_in x H x W with C_out x C_in x KH x KW kernels."""
    if x.ndim != 3 or weight.ndim != 4:
        raise DimensionError(f"conv2d expects C_in x H x W and C_out x C_in x KH x KW, got {x.shape}, {weight.shape}")
    c_in, h, w = x.shape
    c_out, w_in, kh, kw = weight.shape
    if w_in != c_in:
        raise DimensionError(f"conv2d: input channels (axis 0) = {c_in}, weight in-channels (axis 1) = {w_in}")
    if h < kh or w < kw:
        raise DimensionError(f"conv2d: input {h}x{w} (axes 1,2) smaller than kernel {kh}x{kw}")
    h_out = (h - kh) // stride_h + 1
    w_out = (w - kw) // stride_w + 1
    xd = x.data
    cols = sliding_window_view(xd, (kh, kw), axis=(1, 2))[:, ::stride_h, ::stride_w][:, :h_out, :w_out]
    wd = weight.data
    out = np.einsum("iabpq,oipq->oab", cols, wd, optimize=True)
    if bias is not None:
        out = out + bias.data[:, None, None]

    def _back(g):
        gw = np.einsum("oab,iabpq->oipq", g, cols, optimize=True)
        gcols = np.einsum("oab,oipq->iabpq", g, wd, optimize=True)
        gx = np.zeros_like(xd)
        hs = stride_h * (h_out - 1) + 1
        ws = stride_w * (w_out - 1) + 1
        for p in range(kh):
            for q in range(kw):
                gx[:, p : p + hs : stride_h, q : q + ws : stride_w] += gcols[:, :, :, p, q]
        gb = g.sum(axis=(1, 2)) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return _node(out, parents, _back)


# ---------------------------------------------------------------------------
# randomness


class Rng:
    """Seeded PCG64 stream; identical seeds give identical draws everywhere."""

    def __init__(self, seed=0):
        self.seed = seed
        self.gen = np.random.Generator(np.random.PCG64(seed))

    def get_state(self) -> dict:
        return self.gen.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.gen.bit_generator.state = state

    def spawn(self, *key) -> "Rng":
        """Independent child stream addressed by ``key`` (does not advance this stream)."""
        base = self.seed if isinstance(self.seed, (list, tuple)) else [self.seed]
        return Rng([*base, *key])

    def uniform(self, low, high, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, scale=1.0, size=None):
        return self.gen.normal(0.0, scale, size)

    def integers(self, low, high, size=None):
        return self.gen.integers(low, high, size)

    def random(self, size=None):
        return self.gen.random(size)

    def permutation(self, n):
        return self.gen.permutation(n)


def uniform_init(rng: Rng, shape, fan_in: int) -> Tensor:
    """Parameter drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)


def zeros_param(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones_param(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)
