"""Parameter and multiply-accumulate accounting.

``count_params`` enumerates the registered parameter tensors exactly.
``count_flops`` counts multiply-accumulates analytically per layer for
one image at the given resolution: convolutions and linear maps count
output_size * fan_in, attention counts its projection and interaction
matmuls, and KAN layers count one MAC per basis evaluation plus the
basis-weighted linear map.  Normalizations, activations, and pooling
are excluded, as is conventional for MAC counters.
"""

from __future__ import annotations

from .attention import (
    DilatedNeighborhoodAttention2d,
    GroupConvAttention,
    PooledSelfAttention,
)
from .blocks import GlobalBlock, LocalBlock
from .model import DinaKanNet


def count_params(model):
    """Exact trainable-parameter count from the registry."""
    return sum(p.size for _, p in model.named_parameters())


def param_breakdown(model):
    return {name: p.size for name, p in model.named_parameters()}


# ----------------------------------------------------------------------
# analytic MACs

def conv_macs(c_in, c_out, k, h_out, w_out, groups=1):
    return c_out * (c_in // groups) * k * k * h_out * w_out


def linear_macs(n_positions, fan_in, fan_out):
    return n_positions * fan_in * fan_out


def neighborhood_attention_macs(n_tokens, dim, k):
    """Projections plus the two neighbor interaction products (k*k window)."""
    kk = k * k
    return 4 * n_tokens * dim * dim + 2 * n_tokens * kk * dim


def pooled_attention_macs(n_tokens, dim, pool_ratio):
    n_kv = n_tokens // (pool_ratio * pool_ratio)
    return (
        2 * n_tokens * dim * dim      # query + output projections
        + 2 * n_kv * dim * dim        # key + value projections
        + 2 * n_tokens * n_kv * dim   # logits and value mixing
    )


def group_conv_attention_macs(n_tokens, dim, group_width):
    return n_tokens * dim * group_width * 9 + n_tokens * dim * dim


def kan_feedforward_macs(n_tokens, dim, expansion, n_centers):
    basis = n_tokens * dim * n_centers
    expand = n_tokens * (dim * n_centers) * (dim * expansion)
    project = n_tokens * dim * expansion * dim
    return basis + expand + project


def conv_ffn_macs(n_tokens, dim, expansion):
    hidden = dim * expansion
    return n_tokens * dim * hidden + n_tokens * hidden * 9 + n_tokens * hidden * dim


def _local_block_macs(block: LocalBlock, n_tokens):
    return neighborhood_attention_macs(n_tokens, block.dim, block.attn.k) + conv_ffn_macs(
        n_tokens, block.dim, block.ffn.expansion
    )


def _global_block_macs(block: GlobalBlock, n_tokens):
    macs = linear_macs(n_tokens, block.dim, block.wide)        # branch projection
    macs += linear_macs(n_tokens, block.dim, block.narrow)     # skip projection
    macs += pooled_attention_macs(n_tokens, block.wide, block.attn.pool_ratio)
    macs += group_conv_attention_macs(n_tokens, block.wide, block.mixer.group_width)
    macs += linear_macs(n_tokens, block.wide, block.narrow)    # mixer projection
    macs += kan_feedforward_macs(
        n_tokens, block.narrow, block.ffn.expansion, block.ffn.expand.n_centers
    )
    return macs


def count_flops(model: DinaKanNet, input_size=None):
    """Analytic multiply-accumulate count for a single image."""
    cfg = model.cfg
    size = input_size or cfg.input_size
    if size % cfg.total_stride():
        raise ValueError(f"resolution {size} not divisible by stride {cfg.total_stride()}")
    macs = 0
    extent = size
    c_prev = cfg.in_channels
    for layer, stride in zip(model.stem, cfg.stem_strides):
        extent //= stride
        macs += conv_macs(c_prev, layer.conv.out_channels, 3, extent, extent)
        c_prev = layer.conv.out_channels
    for spec, embed, groups in zip(cfg.stages, model.embeds, model.stages):
        extent //= spec.embed_stride
        n_tokens = extent * extent
        macs += linear_macs(n_tokens, c_prev, spec.channels)
        c_prev = spec.channels
        for group in groups:
            for block in group.blocks:
                if isinstance(block, LocalBlock):
                    macs += _local_block_macs(block, n_tokens)
                else:
                    macs += _global_block_macs(block, n_tokens)
    macs += linear_macs(1, c_prev, cfg.num_classes)
    return macs
