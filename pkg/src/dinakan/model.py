"""Hierarchical hybrid model: stage configs, builder, and forward pass.

Every stage stacks L groups of (N local blocks + 1 global block); the
first stage carries no global block and the last stage of the standard
variants is global-only.  A four-conv stem downsamples by 4, each later
stage's patch embedding halves the resolution (average pool stride 2
plus a pointwise channel change), and a global average pool feeds the
classifier.

Variant presets follow the published stage plans:

    tiny   channels ( 96, 128, 192,  384), stage-3 (local x2 + global) x2
    small  channels ( 96, 128, 256,  512), two global groups in stage 4
    base   channels ( 96, 192, 384,  768)
    large  channels ( 96, 256, 512, 1024)

``micro`` is a reduced plan for CPU-scale tests: channels 32/32/64/64,
dilations (1,2,2,1), a stride-2 stem at 32x32 input so every
neighborhood stays feasible.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .attention import FeasibilityError, check_feasible
from .blocks import GlobalBlock, LocalBlock
from .nn import BatchNorm2d, Conv2d, Linear, Module, ModuleList, cast_module
from .tensor import ShapeError


@dataclass
class StageSpec:
    channels: int
    n_local: int          # local blocks per group
    groups: int           # group repeats (L)
    has_global: bool      # stage 1 of the standard plans runs local-only
    pool_ratio: int = 1   # key/value reduction in the global block
    dilation: int = 1     # neighborhood dilation for the local blocks
    embed_stride: int = 2


@dataclass
class ModelConfig:
    name: str = "custom"
    num_classes: int = 2
    in_channels: int = 3
    input_size: int = 224
    stem_channels: tuple = (64, 32, 64, 64)
    stem_strides: tuple = (2, 1, 1, 2)
    stages: list = field(default_factory=list)
    k: int = 3
    head_dim: int = 32
    shrink_ratio: float = 0.75
    kan_expansion: int = 2
    kan_centers: int = 8
    ffn_expansion: int = 3
    dtype: str = "float64"
    seed: int = 0

    def total_stride(self):
        s = 1
        for st in self.stem_strides:
            s *= st
        for stage in self.stages:
            s *= stage.embed_stride
        return s

    def stage_extents(self):
        """Spatial extent entering the blocks of each stage."""
        size = self.input_size
        for st in self.stem_strides:
            size //= st
        out = []
        for stage in self.stages:
            size //= stage.embed_stride
            out.append(size)
        return out

    def validate(self):
        if self.num_classes < 1:
            raise ValueError("model needs at least one class")
        if self.input_size % self.total_stride():
            raise ShapeError(
                f"input size {self.input_size} not divisible by total stride {self.total_stride()}"
            )
        for stage, extent in zip(self.stages, self.stage_extents()):
            if stage.n_local > 0 and stage.groups > 0:
                try:
                    check_feasible(extent, self.k, stage.dilation)
                except FeasibilityError as err:
                    raise FeasibilityError(
                        f"stage with {stage.channels} channels at extent {extent}: {err}"
                    ) from None
            if stage.has_global and stage.groups > 0 and extent % stage.pool_ratio:
                raise ShapeError(
                    f"stage extent {extent} not divisible by pool ratio {stage.pool_ratio}"
                )
        return self

    def to_json(self):
        doc = asdict(self)
        doc["stages"] = [asdict(s) for s in self.stages]
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        doc["stages"] = [StageSpec(**s) for s in doc.get("stages", [])]
        doc["stem_channels"] = tuple(doc.get("stem_channels", (64, 32, 64, 64)))
        doc["stem_strides"] = tuple(doc.get("stem_strides", (2, 1, 1, 2)))
        return cls(**doc)


def _standard_stages(channels, stage3_groups=2, stage4_groups=1):
    c1, c2, c3, c4 = channels
    return [
        StageSpec(c1, 2, 1, False, pool_ratio=8, dilation=8, embed_stride=1),
        StageSpec(c2, 1, 1, True, pool_ratio=4, dilation=4, embed_stride=2),
        StageSpec(c3, 2, stage3_groups, True, pool_ratio=2, dilation=2, embed_stride=2),
        StageSpec(c4, 0, stage4_groups, True, pool_ratio=1, dilation=1, embed_stride=2),
    ]


def config_tiny(num_classes, input_size=224, **kw):
    return ModelConfig(name="tiny", num_classes=num_classes, input_size=input_size,
                       stages=_standard_stages((96, 128, 192, 384)), **kw)


def config_small(num_classes, input_size=224, **kw):
    return ModelConfig(name="small", num_classes=num_classes, input_size=input_size,
                       stages=_standard_stages((96, 128, 256, 512), stage4_groups=2), **kw)


def config_base(num_classes, input_size=224, **kw):
    return ModelConfig(name="base", num_classes=num_classes, input_size=input_size,
                       stages=_standard_stages((96, 192, 384, 768), stage4_groups=2), **kw)


def config_large(num_classes, input_size=224, **kw):
    return ModelConfig(name="large", num_classes=num_classes, input_size=input_size,
                       stages=_standard_stages((96, 256, 512, 1024), stage4_groups=2), **kw)


def config_micro(num_classes, input_size=32, **kw):
    """CPU-scale preset: channels 32/32/64/64, dilations (1,2,2,1)."""
    stages = [
        StageSpec(32, 1, 1, False, pool_ratio=2, dilation=1, embed_stride=1),
        StageSpec(32, 1, 1, True, pool_ratio=2, dilation=2, embed_stride=2),
        StageSpec(64, 1, 1, True, pool_ratio=2, dilation=2, embed_stride=1),
        StageSpec(64, 0, 1, True, pool_ratio=1, dilation=1, embed_stride=2),
    ]
    return ModelConfig(name="micro", num_classes=num_classes, input_size=input_size,
                       stem_channels=(16, 8, 16, 16), stem_strides=(2, 1, 1, 1),
                       stages=stages, **kw)


PRESETS = {
    "tiny": config_tiny,
    "small": config_small,
    "base": config_base,
    "large": config_large,
    "micro": config_micro,
}


class ConvBnRelu(Module):
    def __init__(self, c_in, c_out, stride, dtype=np.float64):
        super().__init__()
        self.conv = Conv2d(c_in, c_out, 3, stride=stride, padding=1, bias=False, dtype=dtype)
        self.norm = BatchNorm2d(c_out, dtype=dtype)

    def forward(self, x):
        return T.relu(self.norm(self.conv(x)))


class PatchEmbed(Module):
    """Stage entry: average-pool downsample (stride > 1) plus a pointwise map."""

    def __init__(self, c_in, c_out, stride, dtype=np.float64):
        super().__init__()
        self.stride = stride
        self.proj = Conv2d(c_in, c_out, 1, bias=False, dtype=dtype)
        self.norm = BatchNorm2d(c_out, dtype=dtype)

    def forward(self, x):
        if self.stride > 1:
            x = T.avgpool2d(x, self.stride, self.stride)
        return self.norm(self.proj(x))


class StageGroup(Module):
    """One (local x N + global x 0/1) group."""

    def __init__(self, spec, cfg, dtype):
        super().__init__()
        self.blocks = ModuleList()
        for _ in range(spec.n_local):
            self.blocks.append(LocalBlock(
                spec.channels, k=cfg.k, dilation=spec.dilation, head_dim=cfg.head_dim,
                ffn_expansion=cfg.ffn_expansion, dtype=dtype,
            ))
        if spec.has_global:
            self.blocks.append(GlobalBlock(
                spec.channels, pool_ratio=spec.pool_ratio, shrink_ratio=cfg.shrink_ratio,
                head_dim=cfg.head_dim, kan_expansion=cfg.kan_expansion,
                kan_centers=cfg.kan_centers, dtype=dtype,
            ))

    def forward(self, z, record=None, prefix=""):
        for i, block in enumerate(self.blocks):
            z = block(z)
            if record is not None:
                kind = "global" if isinstance(block, GlobalBlock) else "local"
                record[f"{prefix}.{kind}{i}"] = z
        return z


class DinaKanNet(Module):
    """The full hierarchical classifier."""

    def __init__(self, cfg):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        T.set_seed(cfg.seed)
        dtype = np.float64  # built at full precision, cast afterwards if asked
        self.stem = ModuleList()
        c_prev = cfg.in_channels
        for c, s in zip(cfg.stem_channels, cfg.stem_strides):
            self.stem.append(ConvBnRelu(c_prev, c, s, dtype=dtype))
            c_prev = c
        self.embeds = ModuleList()
        self.stages = ModuleList()
        for spec in cfg.stages:
            self.embeds.append(PatchEmbed(c_prev, spec.channels, spec.embed_stride, dtype=dtype))
            groups = ModuleList()
            for _ in range(spec.groups):
                groups.append(StageGroup(spec, cfg, dtype))
            self.stages.append(groups)
            c_prev = spec.channels
        self.head = Linear(c_prev, cfg.num_classes, dtype=dtype)
        if np.dtype(cfg.dtype) == np.float32:
            cast_module(self, np.float32)

    # ------------------------------------------------------------------
    def features(self, x, record=None):
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise ShapeError(f"expected [B,{self.cfg.in_channels},H,W] input, got {x.shape}")
        if x.shape[2] % self.cfg.total_stride() or x.shape[3] % self.cfg.total_stride():
            raise ShapeError(
                f"resolution {x.shape[2]}x{x.shape[3]} not divisible by stride {self.cfg.total_stride()}"
            )
        for i, layer in enumerate(self.stem):
            x = layer(x)
            if record is not None:
                record[f"stem{i}"] = x
        for si, (embed, groups) in enumerate(zip(self.embeds, self.stages)):
            x = embed(x)
            if record is not None:
                record[f"stage{si + 1}.embed"] = x
            for gi, group in enumerate(groups):
                x = group(x, record=record, prefix=f"stage{si + 1}.group{gi}")
        return x

    def forward_logits(self, x, record=None):
        feats = self.features(x, record=record)
        pooled = T.mean(feats, axis=(2, 3))
        return self.head(pooled)

    def forward(self, x):
        """Class probabilities, rows summing to one."""
        return T.softmax(self.forward_logits(x), axis=-1)

    def forward_features(self, x):
        """(logits, ordered layer-name -> activation map) for the analysis tools."""
        record = {}
        logits = self.forward_logits(x, record=record)
        return logits, record

    def stage_pattern(self):
        """Block-kind letters per stage, e.g. [['L','L'], ['L','G'], ...]."""
        pattern = []
        for groups in self.stages:
            letters = []
            for group in groups:
                for block in group.blocks:
                    letters.append("G" if isinstance(block, GlobalBlock) else "L")
            pattern.append(letters)
        return pattern

    def stage_signature(self):
        """One letter per stage: C = local-only, T = global-only, H = hybrid."""
        letters = []
        for stage in self.stage_pattern():
            kinds = set(stage)
            if kinds == {"L"}:
                letters.append("C")
            elif kinds == {"G"}:
                letters.append("T")
            elif kinds:
                letters.append("H")
            else:
                letters.append("-")
        return " ".join(letters)


def build_model(cfg):
    """Validate the config and construct the model (seeded, deterministic)."""
    return DinaKanNet(cfg)


def build_preset(name, num_classes, input_size=None, **kw):
    if name not in PRESETS:
        raise ValueError(f"unknown variant {name!r}; choose from {sorted(PRESETS)}")
    if input_size is None:
        return build_model(PRESETS[name](num_classes, **kw))
    return build_model(PRESETS[name](num_classes, input_size=input_size, **kw))
