"""Local and global perception blocks.

A local block is two pre-normalized residual sub-layers: dilated
neighborhood attention, then the convolutional feed-forward (pointwise
expand, depthwise 3x3, pointwise project, batchnorm+ReLU after the
first two convolutions).

A global block splits the channels ``floor(r*C) / C - floor(r*C)``:
the wide branch runs pooled self-attention with a residual, the narrow
branch runs the grouped-conv mixer followed by the KAN feed-forward,
and the two branch outputs concatenate back to exactly C channels.
Entry projections initialize to complementary channel slices and every
branch-final projection initializes to zero, so a freshly built block
is the identity map - training then grows the mixing terms from zero.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .attention import (
    DilatedNeighborhoodAttention2d,
    GroupConvAttention,
    PooledSelfAttention,
)
from .kan import KanFeedForward
from .nn import BatchNorm2d, Conv2d, LayerNorm, Module
from .tensor import ShapeError


class ConvFeedForward(Module):
    """Pointwise expansion, depthwise 3x3, pointwise projection."""

    def __init__(self, dim, expansion=3, zero_init_out=True, dtype=np.float64):
        super().__init__()
        hidden = dim * expansion
        self.dim = dim
        self.expansion = expansion
        self.conv1 = Conv2d(dim, hidden, 1, dtype=dtype)
        self.norm1 = BatchNorm2d(hidden, dtype=dtype)
        self.conv2 = Conv2d(hidden, hidden, 3, padding=1, groups=hidden, dtype=dtype)
        self.norm2 = BatchNorm2d(hidden, dtype=dtype)
        self.conv3 = Conv2d(hidden, dim, 1, zero_init=zero_init_out, dtype=dtype)

    def forward(self, x):
        x = T.relu(self.norm1(self.conv1(x)))
        x = T.relu(self.norm2(self.conv2(x)))
        return self.conv3(x)


class LocalBlock(Module):
    """Residual neighborhood attention followed by a residual conv FFN."""

    def __init__(self, dim, k=3, dilation=1, head_dim=32, ffn_expansion=3, dtype=np.float64):
        super().__init__()
        self.dim = dim
        self.norm1 = LayerNorm(dim, axis=1, dtype=dtype)
        self.attn = DilatedNeighborhoodAttention2d(
            dim, k=k, dilation=dilation, head_dim=head_dim, zero_init_out=True, dtype=dtype
        )
        self.norm2 = LayerNorm(dim, axis=1, dtype=dtype)
        self.ffn = ConvFeedForward(dim, expansion=ffn_expansion, zero_init_out=True, dtype=dtype)

    def forward(self, z):
        if z.shape[1] != self.dim:
            raise ShapeError(f"local block expects {self.dim} channels, got {z.shape}")
        z = z + self.attn(self.norm1(z))
        return z + self.ffn(self.norm2(z))


def _slice_projection(dim, start, width, dtype):
    w = np.zeros((width, dim, 1, 1), dtype=dtype)
    for i in range(width):
        w[i, start + i, 0, 0] = 1.0
    return w


class GlobalBlock(Module):
    def __init__(self, dim, pool_ratio=1, shrink_ratio=0.75, head_dim=32,
                 kan_expansion=2, kan_centers=8, dtype=np.float64):
        super().__init__()
        self.dim = dim
        self.shrink_ratio = shrink_ratio
        self.wide = int(dim * shrink_ratio)
        self.narrow = dim - self.wide
        if self.wide < 1 or self.narrow < 1:
            raise ShapeError(f"shrink ratio {shrink_ratio} degenerates {dim} channels")
        self.branch_proj = Conv2d(dim, self.wide, 1, dtype=dtype)
        self.branch_proj.weight.data[:] = _slice_projection(dim, 0, self.wide, dtype)
        self.skip_proj = Conv2d(dim, self.narrow, 1, dtype=dtype)
        self.skip_proj.weight.data[:] = _slice_projection(dim, self.wide, self.narrow, dtype)
        self.norm = LayerNorm(self.wide, axis=1, dtype=dtype)
        self.attn = PooledSelfAttention(
            self.wide, pool_ratio=pool_ratio, head_dim=head_dim, zero_init_out=True, dtype=dtype
        )
        self.mixer = GroupConvAttention(self.wide, head_dim=head_dim, dtype=dtype)
        self.mixer_proj = Conv2d(self.wide, self.narrow, 1, dtype=dtype)
        self.ffn = KanFeedForward(
            self.narrow, expansion=kan_expansion, n_centers=kan_centers,
            zero_init_out=True, dtype=dtype,
        )

    def forward(self, z):
        if z.shape[1] != self.dim:
            raise ShapeError(f"global block expects {self.dim} channels, got {z.shape}")
        za = self.branch_proj(z)
        zt = za + self.attn(self.norm(za))
        h = self.mixer_proj(self.mixer(zt))
        g = self.skip_proj(z) + self.ffn(h)
        return T.concat([zt, g], axis=1)
