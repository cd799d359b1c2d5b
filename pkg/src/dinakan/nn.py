"""Module/parameter plumbing and the shared layer zoo.

Modules register parameters, buffers, and child modules through
attribute assignment; ``named_parameters`` walks the tree and emits
dotted-path names ("stage3.group1.block0.ffn.conv1.weight"), which the
checkpoint format and the optimizer key on.  Names are unique by
construction because attribute paths are.

Normalization layers are composed from differentiable primitives, so
their backward passes come from the tape rather than hand-derived
formulas.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


class Parameter(Tensor):
    """A trainable leaf tensor; ``trainable=False`` freezes it."""

    __slots__ = ("trainable",)

    def __init__(self, data, trainable=True, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.trainable = trainable


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, value):
        """Track a non-trainable tensor that still persists in checkpoints."""
        buf = value if isinstance(value, Tensor) else Tensor(value)
        self._buffers[name] = buf
        object.__setattr__(self, name, buf)

    # ------------------------------------------------------------------
    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield (prefix + name, p)
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name, b in self._buffers.items():
            yield (prefix + name, b)
        for name, m in self._modules.items():
            yield from m.named_buffers(prefix + name + ".")

    def named_tensors(self):
        """Parameters followed by buffers; the checkpoint payload."""
        yield from self.named_parameters()
        yield from self.named_buffers()

    def modules(self):
        yield self
        for m in self._modules.values():
            yield from m.modules()

    def train(self, mode=True):
        for m in self.modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError


class ModuleList(Module):
    def __init__(self, items=()):
        super().__init__()
        self._items = []
        for item in items:
            self.append(item)

    def append(self, module):
        self._modules[str(len(self._items))] = module
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, idx):
        return self._items[idx]


# ----------------------------------------------------------------------
# initializers

def uniform_init(shape, fan_in, rng=None, dtype=np.float64):
    """Symmetric fan-scaled uniform init (the usual linear/conv default)."""
    rng = rng or T.get_rng()
    bound = 1.0 / np.sqrt(fan_in) if fan_in > 0 else 0.0
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


# ----------------------------------------------------------------------
# layers

class Linear(Module):
    """y = x @ W + b with W stored [in_features, out_features]."""

    def __init__(self, in_features, out_features, bias=True, zero_init=False, dtype=np.float64):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        if zero_init:
            w = np.zeros((in_features, out_features), dtype=dtype)
        else:
            w = uniform_init((in_features, out_features), in_features, dtype=dtype)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(out_features, dtype=dtype)) if bias else None

    def forward(self, x):
        if x.shape[-1] != self.in_features:
            raise ShapeError(f"Linear expected last extent {self.in_features}, got {x.shape}")
        out = T.matmul(x, self.weight) if x.ndim == 2 else self._stacked(x)
        if self.bias is not None:
            out = out + self.bias
        return out

    def _stacked(self, x):
        lead = x.shape[:-1]
        flat = T.reshape(x, (-1, self.in_features))
        return T.reshape(T.matmul(flat, self.weight), lead + (self.out_features,))


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0,
                 groups=1, bias=True, zero_init=False, dtype=np.float64):
        super().__init__()
        if in_channels % groups or out_channels % groups:
            raise ShapeError(
                f"conv channels {in_channels}->{out_channels} not divisible by groups={groups}"
            )
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        self.groups = groups
        shape = (out_channels, in_channels // groups, kernel_size, kernel_size)
        fan_in = (in_channels // groups) * kernel_size * kernel_size
        w = np.zeros(shape, dtype=dtype) if zero_init else uniform_init(shape, fan_in, dtype=dtype)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype)) if bias else None

    def forward(self, x):
        return T.conv2d(x, self.weight, self.bias, stride=self.stride,
                        padding=self.padding, groups=self.groups)


class BatchNorm2d(Module):
    """Per-channel normalization over (batch, height, width).

    Training mode normalizes with batch statistics and updates running
    estimates (momentum 0.1); eval mode uses the running estimates.  A
    training batch of size 1 is rejected outright rather than silently
    rescued by epsilon.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float64):
        super().__init__()
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"batchnorm2d expected [B,{self.channels},H,W], got {x.shape}")
        if self.training:
            if x.shape[0] == 1:
                raise ValueError(
                    "batchnorm2d: batch of size 1 in training mode gives degenerate statistics"
                )
            out, mu, var = T.affine_norm(x, self.gamma, self.beta, (0, 2, 3), 1, self.eps)
            self.running_mean.data[:] = (1 - self.momentum) * self.running_mean.data + self.momentum * mu
            self.running_var.data[:] = (1 - self.momentum) * self.running_var.data + self.momentum * var
            return out
        inv = Tensor(1.0 / np.sqrt(self.running_var.data + self.eps))
        scale = self.gamma * inv
        shift = self.beta - Tensor(self.running_mean.data) * scale
        shape = (1, self.channels, 1, 1)
        return x * T.reshape(scale, shape) + T.reshape(shift, shape)


class LayerNorm(Module):
    """Normalize over one axis (feature axis by default, channel axis for maps)."""

    def __init__(self, dim, axis=-1, eps=1e-5, dtype=np.float64):
        super().__init__()
        self.dim = dim
        self.axis = axis
        self.eps = eps
        self.gamma = Parameter(np.ones(dim, dtype=dtype))
        self.beta = Parameter(np.zeros(dim, dtype=dtype))

    def forward(self, x):
        axis = self.axis % x.ndim
        if x.shape[axis] != self.dim:
            raise ShapeError(f"layernorm dim {self.dim} does not match axis {axis} of {x.shape}")
        out, _, _ = T.affine_norm(x, self.gamma, self.beta, (axis,), axis, self.eps)
        return out


def normalize(x, kind, norm_module):
    """Spec-surface dispatcher over the two normalization kinds."""
    if kind == "batchnorm2d":
        if not isinstance(norm_module, BatchNorm2d):
            raise ValueError("batchnorm2d normalization needs a BatchNorm2d module")
    elif kind == "layernorm":
        if not isinstance(norm_module, LayerNorm):
            raise ValueError("layernorm normalization needs a LayerNorm module")
    else:
        raise ValueError(f"unknown normalization kind {kind!r}")
    return norm_module(x)


def cast_module(module, dtype):
    """Convert every parameter and buffer to ``dtype`` in place."""
    dtype = np.dtype(dtype)
    for _, p in module.named_parameters():
        p.data = p.data.astype(dtype)
    for _, b in module.named_buffers():
        b.data = b.data.astype(dtype)
    return module
