"""Multi-scale temporal (MST) block.

n parallel same-length 1-D convolutions with kernel sizes 3, 5, ..., 2n+1 are
stacked into a c2 x n x T volume along a new scale axis; a 2-D convolution
with kernel (n, 2) and stride (1, 2) fuses the scales and halves the time
axis. Two blocks in sequence give the second and third feature levels.
"""
from __future__ import annotations

from . import tensor as tn
from .errors import ConfigError, ContractError
from .tensor import Rng, Tensor


class MstBlock:
    def __init__(self, c2: int, num_scales: int, rng: Rng, fusion_relu: bool = True, prefix: str = "mst"):
        if num_scales < 1:
            raise ConfigError("an MST block needs at least one branch")
        self.c2 = c2
        self.kernels = [3 + 2 * i for i in range(num_scales)]
        self.fusion_relu = fusion_relu
        self.prefix = prefix
        self.params = {}
        for k in self.kernels:
            self.params[f"{prefix}.k{k}.w"] = tn.uniform_init(rng, (c2, c2, k), c2 * k)
            self.params[f"{prefix}.k{k}.b"] = tn.zeros_param(c2)
        n = num_scales
        self.params[f"{prefix}.fuse.w"] = tn.uniform_init(rng, (c2, c2, n, 2), c2 * n * 2)
        self.params[f"{prefix}.fuse.b"] = tn.zeros_param(c2)

    @property
    def num_scales(self):
        return len(self.kernels)

    def branches(self, xt: Tensor) -> list:
        """Per-scale outputs (c2 x T each) for channel-major input, in kernel-size order."""
        p = self.params
        return [
            tn.conv1d(xt, p[f"{self.prefix}.k{k}.w"], p[f"{self.prefix}.k{k}.b"], padding=(k - 1) // 2, stride=1)
            for k in self.kernels
        ]

    def __call__(self, x: Tensor) -> Tensor:
        return mst_forward(x, self)


def mst_forward(x: Tensor, block: MstBlock) -> Tensor:
    """T x c2 -> T/2 x c2."""
    t = x.shape[0]
    if t < 2 or t % 2:
        raise ContractError(f"MST block needs an even length >= 2, got T={t}; pad the sequence")
    xt = tn.transpose(x)
    stacked = tn.stack(block.branches(xt), axis=1)  # c2 x n x T
    p = block.params
    fused = tn.conv2d(stacked, p[f"{block.prefix}.fuse.w"], p[f"{block.prefix}.fuse.b"], stride_h=1, stride_w=2)
    if block.fusion_relu:
        fused = tn.relu(fused)
    out = tn.reshape(fused, (block.c2, t // 2))
    return tn.transpose(out)


def mst_stack(level1: Tensor, blocks) -> list:
    """Apply blocks in order; returns the output of every block."""
    factor = 2 ** len(blocks)
    if level1.shape[0] % factor:
        raise ContractError(f"length {level1.shape[0]} not divisible by {factor}")
    outs = []
    h = level1
    for b in blocks:
        h = b(h)
        outs.append(h)
    return outs
