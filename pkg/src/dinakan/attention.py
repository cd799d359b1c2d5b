"""Token mixers: dilated neighborhood attention and its companions.

The neighborhood kernel restricts each query token to its k nearest
tokens that share the query's residue modulo the dilation, per axis;
2-D neighborhoods are the Cartesian product of the per-axis selections.
Near a boundary the window shifts inward so every token attends to
exactly k positions (a varying softmax support would otherwise change
the attention semantics at the edges).

Also here: the dense multi-head self-attention used as the equivalence
oracle, the pooled-key/value attention used by the global blocks, and
the grouped-convolution mixer.
"""

from __future__ import annotations

import functools

import numpy as np

from . import tensor as T
from .nn import BatchNorm2d, Conv2d, Linear, Module, Parameter
from .tensor import ShapeError


class FeasibilityError(ValueError):
    """Neighborhood does not fit: k * dilation exceeds the spatial extent."""


def check_feasible(extent, k, dilation):
    if k * dilation > extent:
        raise FeasibilityError(
            f"neighborhood size {k} with dilation {dilation} needs extent >= {k * dilation}, got {extent}"
        )


def neighbor_indices(i, extent, k, dilation=1):
    """The k in-bounds positions congruent to ``i`` (mod dilation) nearest to it.

    Returned sorted by distance from ``i``, lower index first on ties.
    The window clamps inward at boundaries so exactly k positions come
    back whenever ``k * dilation <= extent``.
    """
    check_feasible(extent, k, dilation)
    if not 0 <= i < extent:
        raise ShapeError(f"token {i} outside extent {extent}")
    candidates = range(i % dilation, extent, dilation)
    ordered = sorted(candidates, key=lambda x: (abs(x - i), x))
    return ordered[:k]


def neighborhood_table(extent, k, dilation=1):
    """Per-token neighbor positions and relative offsets, ascending order.

    Returns ``(positions, offsets)`` of shape [extent, k]; offsets are
    ``(position - i) / dilation`` and lie in ``[-(k-1), k-1]``, so a
    relative-bias table indexed by offset is shared across tokens.
    """
    check_feasible(extent, k, dilation)
    positions = np.empty((extent, k), dtype=np.intp)
    chain_len = np.empty(dilation, dtype=np.intp)
    for r in range(dilation):
        chain_len[r] = (extent - r + dilation - 1) // dilation
    half = (k - 1) // 2
    for i in range(extent):
        r = i % dilation
        pos_in_chain = i // dilation
        start = min(max(pos_in_chain - half, 0), chain_len[r] - k)
        positions[i] = r + dilation * (start + np.arange(k))
    offsets = (positions - np.arange(extent)[:, None]) // dilation
    return positions, offsets


def _fit_group_width(channels, target):
    """Largest divisor of ``channels`` not exceeding ``target``."""
    width = min(target, channels)
    while channels % width:
        width -= 1
    return width


@functools.lru_cache(maxsize=256)
def _cached_tables(extent, k, dilation):
    # an undilated window wider than the axis degenerates to full
    # coverage, which keeps the dense-attention equivalence usable for
    # any k >= extent; dilated windows must fit outright
    if dilation == 1:
        k = min(k, extent)
    positions, offsets = neighborhood_table(extent, k, dilation)
    positions.setflags(write=False)
    offsets.setflags(write=False)
    return positions, offsets


def _inverse_table(positions, n_tokens):
    """For each token, the flat (query, slot) references pointing at it.

    Rows pad with the index of an appended zero slot, so the scatter in
    the gather op's backward becomes a gather-and-sum.
    """
    flat = positions.reshape(-1)
    counts = np.bincount(flat, minlength=n_tokens)
    order = np.argsort(flat, kind="stable")
    starts = np.cumsum(counts) - counts
    slot = np.arange(flat.size) - np.repeat(starts, counts)
    inverse = np.full((n_tokens, int(counts.max())), flat.size, dtype=np.intp)
    inverse[flat[order], slot] = order
    return inverse


@functools.lru_cache(maxsize=256)
def _tables_2d(height, width, k, dilation):
    """2-D neighbor token indices and flat bias-offset indices, row-major."""
    py, oy = _cached_tables(height, k, dilation)
    px, ox = _cached_tables(width, k, dilation)
    ky, kx = py.shape[1], px.shape[1]
    span = 2 * k - 1
    pos = (py[:, None, :, None] * width + px[None, :, None, :]).reshape(height * width, ky * kx)
    off = ((oy + k - 1)[:, None, :, None] * span + (ox + k - 1)[None, :, None, :]).reshape(
        height * width, ky * kx
    )
    pos.setflags(write=False)
    off.setflags(write=False)
    return pos, off


def _gather_tokens(x, positions, inverse):
    """Gather neighbor tokens: [B,h,N,d] with [N,kk] -> [B,h,N,kk,d].

    Backward scatters through the precomputed inverse table instead of a
    scalar scatter-add, which is the hot path of the attention kernel.
    """
    b, h, n, d = x.shape
    kk = positions.shape[1]
    out_data = np.take(x.data, positions, axis=2)

    def backward_fn(grad):
        flat = grad.reshape(b, h, n * kk, d)
        padded = np.concatenate([flat, np.zeros((b, h, 1, d), dtype=grad.dtype)], axis=2)
        gx = padded[:, :, inverse, :].sum(axis=3)
        x._accumulate(gx, owned=True)

    return T._make(out_data, (x,), backward_fn)


def _split_heads(x, n_heads):
    # [B, N, C] -> [B, h, N, C/h]
    b, n, c = x.shape
    x = T.reshape(x, (b, n, n_heads, c // n_heads))
    return T.transpose(x, (0, 2, 1, 3))


def _merge_heads(x):
    # [B, h, N, d] -> [B, N, C]
    b, h, n, d = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, n, h * d))


def _scaled_attention(q, k, v, scale, bias=None):
    """softmax((q k^T + bias) * scale) v over the last two axes."""
    logits = T.matmul(q, k.swapaxes(-1, -2))
    if bias is not None:
        logits = logits + bias
    attn = T.softmax(logits * scale, axis=-1)
    return T.matmul(attn, v)


class RelativeBias(Module):
    """Learnable per-head scalars indexed by relative neighbor offset.

    One axis contributes ``2k - 1`` possible offsets; the table stores
    ``(2k - 1) ** ndim`` entries per head and is zero-initialized so the
    dense-attention equivalence holds at initialization.
    """

    def __init__(self, n_heads, k, ndim, dtype=np.float64):
        super().__init__()
        self.n_heads = n_heads
        self.k = k
        self.ndim = ndim
        self.table = Parameter(np.zeros((n_heads, (2 * k - 1) ** ndim), dtype=dtype))

    def lookup(self, flat_offset_index):
        # [h, table] gathered with [N, kk] -> [h, N, kk]
        return T.take(self.table, flat_offset_index, axis=1)


class _NeighborhoodCore(Module):
    """Shared projection + gather-attend machinery for 1-D and 2-D forms."""

    def __init__(self, dim, k, dilation, head_dim, ndim, qkv_bias=True,
                 zero_init_out=False, dtype=np.float64):
        super().__init__()
        if dim % head_dim:
            raise ShapeError(f"embedding dim {dim} not divisible by head dim {head_dim}")
        if k % 2 == 0:
            raise ValueError(f"neighborhood size must be odd, got {k}")
        if dilation < 1:
            raise ValueError(f"dilation must be >= 1, got {dilation}")
        self.dim = dim
        self.k = k
        self.dilation = dilation
        self.head_dim = head_dim
        self.n_heads = dim // head_dim
        self.query = Linear(dim, dim, bias=qkv_bias, dtype=dtype)
        self.key = Linear(dim, dim, bias=qkv_bias, dtype=dtype)
        self.value = Linear(dim, dim, bias=qkv_bias, dtype=dtype)
        self.out = Linear(dim, dim, bias=qkv_bias, zero_init=zero_init_out, dtype=dtype)
        self.bias = RelativeBias(self.n_heads, k, ndim, dtype=dtype)

    def _attend_tokens(self, tokens, positions, offset_index):
        """tokens [B,N,C] with neighbor tables [N, kk] -> [B,N,C]."""
        q = _split_heads(self.query(tokens), self.n_heads)
        k = _split_heads(self.key(tokens), self.n_heads)
        v = _split_heads(self.value(tokens), self.n_heads)
        b, h, n, d = q.shape
        kk = positions.shape[1]

        inverse = _inverse_table(positions, n)
        k_n = _gather_tokens(k, positions, inverse)  # [B,h,N,kk,d]
        v_n = _gather_tokens(v, positions, inverse)
        q_e = T.reshape(q, (b, h, n, 1, d))
        logits = T.reshape(T.matmul(q_e, k_n.swapaxes(-1, -2)), (b, h, n, kk))
        bias = T.reshape(self.bias.lookup(offset_index), (1, h, n, kk))
        attn = T.softmax((logits + bias) * (1.0 / np.sqrt(self.head_dim)), axis=-1)
        attn_e = T.reshape(attn, (b, h, n, 1, kk))
        out = T.reshape(T.matmul(attn_e, v_n), (b, h, n, d))
        return self.out(_merge_heads(out))


class DilatedNeighborhoodAttention1d(_NeighborhoodCore):
    """Neighborhood attention over a token line; used for receptive-field work."""

    def __init__(self, dim, k=3, dilation=1, head_dim=32, **kwargs):
        super().__init__(dim, k, dilation, head_dim, ndim=1, **kwargs)

    def forward(self, x):
        if x.ndim != 3:
            raise ShapeError(f"expected [B,N,C] tokens, got {x.shape}")
        n = x.shape[1]
        positions, offsets = _cached_tables(n, self.k, self.dilation)
        offset_index = offsets + (self.k - 1)
        return self._attend_tokens(x, positions, offset_index)


class DilatedNeighborhoodAttention2d(_NeighborhoodCore):
    """Neighborhood attention on a [B,C,H,W] feature map.

    Per head and token, attention runs over the k x k dilated
    neighborhood with a relative-position bias added to the logits
    before the square-root-of-head-dim scaling.
    """

    def __init__(self, dim, k=3, dilation=1, head_dim=32, **kwargs):
        super().__init__(dim, k, dilation, head_dim, ndim=2, **kwargs)

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeError(f"expected [B,C,H,W], got {x.shape}")
        b, c, h, w = x.shape
        if c != self.dim:
            raise ShapeError(f"channel extent {c} != configured dim {self.dim}")
        positions, offset_index = _tables_2d(h, w, self.k, self.dilation)
        tokens = T.transpose(T.reshape(x, (b, c, h * w)), (0, 2, 1))
        out = self._attend_tokens(tokens, positions, offset_index)
        return T.reshape(T.transpose(out, (0, 2, 1)), (b, c, h, w))


class MultiHeadSelfAttention(Module):
    """Dense attention over all tokens; the quadratic oracle baseline."""

    def __init__(self, dim, n_heads=1, qkv_bias=True, dtype=np.float64):
        super().__init__()
        if dim % n_heads:
            raise ShapeError(f"embedding dim {dim} not divisible by {n_heads} heads")
        self.dim = dim
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.query = Linear(dim, dim, bias=qkv_bias, dtype=dtype)
        self.key = Linear(dim, dim, bias=qkv_bias, dtype=dtype)
        self.value = Linear(dim, dim, bias=qkv_bias, dtype=dtype)
        self.out = Linear(dim, dim, bias=qkv_bias, dtype=dtype)

    def forward(self, x):
        if x.ndim != 3:
            raise ShapeError(f"expected [B,N,C] tokens, got {x.shape}")
        q = _split_heads(self.query(x), self.n_heads)
        k = _split_heads(self.key(x), self.n_heads)
        v = _split_heads(self.value(x), self.n_heads)
        out = _scaled_attention(q, k, v, 1.0 / np.sqrt(self.head_dim))
        return self.out(_merge_heads(out))


class PooledSelfAttention(Module):
    """Self-attention whose keys/values come from a pooled copy of the map.

    Queries cover every position; keys and values are computed from the
    input average-pooled by ``pool_ratio`` per axis, shrinking the KV
    sequence by pool_ratio**2.  The residual add belongs to the caller.
    """

    def __init__(self, dim, pool_ratio=1, head_dim=32, qkv_bias=True,
                 zero_init_out=False, dtype=np.float64):
        super().__init__()
        self.dim = dim
        self.pool_ratio = pool_ratio
        self.head_dim = _fit_group_width(dim, head_dim)
        self.n_heads = dim // self.head_dim
        self.query = Linear(dim, dim, bias=qkv_bias, dtype=dtype)
        self.key = Linear(dim, dim, bias=qkv_bias, dtype=dtype)
        self.value = Linear(dim, dim, bias=qkv_bias, dtype=dtype)
        self.out = Linear(dim, dim, bias=qkv_bias, zero_init=zero_init_out, dtype=dtype)

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeError(f"expected [B,C,H,W], got {x.shape}")
        b, c, h, w = x.shape
        r = self.pool_ratio
        if h % r or w % r:
            raise ShapeError(f"spatial extent {h}x{w} not divisible by pool ratio {r}")
        tokens = T.transpose(T.reshape(x, (b, c, h * w)), (0, 2, 1))
        if r > 1:
            pooled = T.avgpool2d(x, r, r)
            kv_tokens = T.transpose(T.reshape(pooled, (b, c, (h // r) * (w // r))), (0, 2, 1))
        else:
            kv_tokens = tokens
        q = _split_heads(self.query(tokens), self.n_heads)
        k = _split_heads(self.key(kv_tokens), self.n_heads)
        v = _split_heads(self.value(kv_tokens), self.n_heads)
        out = _scaled_attention(q, k, v, 1.0 / np.sqrt(self.head_dim))
        out = self.out(_merge_heads(out))
        return T.reshape(T.transpose(out, (0, 2, 1)), (b, c, h, w))


class GroupConvAttention(Module):
    """Grouped 3x3 convolution mixer: each head is a channel group.

    Group width follows the head dimension (largest divisor of the
    channel count not exceeding it), then batchnorm, ReLU, and a
    pointwise projection.  Shape-preserving.
    """

    def __init__(self, dim, head_dim=32, dtype=np.float64):
        super().__init__()
        self.dim = dim
        self.group_width = _fit_group_width(dim, head_dim)
        self.groups = dim // self.group_width
        self.mix = Conv2d(dim, dim, 3, padding=1, groups=self.groups, bias=False, dtype=dtype)
        self.norm = BatchNorm2d(dim, dtype=dtype)
        self.proj = Conv2d(dim, dim, 1, bias=False, dtype=dtype)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.dim:
            raise ShapeError(f"expected [B,{self.dim},H,W], got {x.shape}")
        return self.proj(T.relu(self.norm(self.mix(x))))
