"""Dense tensor with reverse-mode automatic differentiation.

A ``Tensor`` wraps a contiguous numpy array and records the operations
applied to it.  Calling :meth:`Tensor.backward` on a scalar result walks
the recorded graph in reverse topological order and accumulates
``d(output)/d(node)`` into ``node.grad`` for every node that requires a
gradient (intermediates included, which is what the activation-map
tooling relies on).

Float64 is the default precision; float32 is accepted for training
throughput.  Finite-difference verification is only meaningful at
float64.

Concurrency: forward evaluation over an immutable parameter set is safe
from multiple threads (ops never mutate their inputs); a recorded graph
is single-writer, so one training step owns one backward pass, and any
cross-worker gradient combination is an explicit reduction by the
caller.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible with an operation."""


_DTYPES = (np.float32, np.float64)

_rng = np.random.default_rng(0)


def set_seed(seed):
    """Reset the generator used for parameter initialization."""
    global _rng
    _rng = np.random.default_rng(seed)


def get_rng():
    return _rng


def _as_array(data, dtype):
    arr = np.asarray(data, dtype=dtype)
    # ascontiguousarray would promote 0-d scalars to 1-d
    return arr if arr.ndim == 0 else np.ascontiguousarray(arr)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None, _parents=(), _backward=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = _as_array(data, dtype or getattr(data, "dtype", None) or np.float64)
        if self.data.dtype not in _DTYPES:
            self.data = self.data.astype(np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward

    # ------------------------------------------------------------------
    # basic introspection
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data.reshape(()))

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self):
        self.grad = None

    # ------------------------------------------------------------------
    # autodiff driver
    def backward(self, grad=None):
        """Populate ``.grad`` of every reachable node requiring gradients.

        The output must be a scalar (one element) unless an explicit seed
        gradient of matching shape is supplied.  Gradients accumulate
        additively, so a value used twice receives the sum of both paths.
        """
        if grad is None:
            if self.size != 1:
                raise ShapeError(
                    f"backward() needs a scalar output, got shape {self.shape}; "
                    "pass an explicit seed gradient otherwise"
                )
            grad = np.ones_like(self.data)
        else:
            grad = _as_array(grad, self.data.dtype)
            if grad.shape != self.data.shape:
                raise ShapeError(f"seed gradient shape {grad.shape} != output shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("backward() on a tensor detached from every trainable leaf")

        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, grad, owned=False):
        # "owned" marks freshly computed arrays that no other node can
        # alias, letting the first accumulation skip its defensive copy.
        if self.grad is None:
            self.grad = grad if owned else grad.copy()
        else:
            self.grad += grad

    # ------------------------------------------------------------------
    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / float(other))

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take_slice(self, key)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def swapaxes(self, a, b):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def as_tensor(value, like=None):
    """Coerce plain numbers/arrays to a constant Tensor."""
    if isinstance(value, Tensor):
        return value
    dtype = like.data.dtype if like is not None else np.float64
    return Tensor(np.asarray(value, dtype=dtype))


def _make(data, parents, backward_fn):
    requires = any(p.requires_grad for p in parents)
    return Tensor(
        data,
        requires_grad=requires,
        _parents=tuple(p for p in parents if p.requires_grad),
        _backward=backward_fn if requires else None,
    )


def _unbroadcast(grad, shape):
    """Sum gradient over axes that were broadcast in the forward pass."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ----------------------------------------------------------------------
# elementwise arithmetic

def add(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    out_data = a.data + b.data

    def backward_fn(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(grad, b.shape))

    return _make(out_data, (a, b), backward_fn)


def sub(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    out_data = a.data - b.data

    def backward_fn(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-grad, b.shape))

    return _make(out_data, (a, b), backward_fn)


def mul(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    out_data = a.data * b.data

    def backward_fn(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad * b.data, a.shape), owned=True)
        if b.requires_grad:
            b._accumulate(_unbroadcast(grad * a.data, b.shape), owned=True)

    return _make(out_data, (a, b), backward_fn)


def neg(a):
    a = as_tensor(a)

    def backward_fn(grad):
        a._accumulate(-grad, owned=True)

    return _make(-a.data, (a,), backward_fn)


def power(a, exponent):
    """Elementwise power with a constant exponent."""
    a = as_tensor(a)
    exponent = float(exponent)
    out_data = a.data ** exponent

    def backward_fn(grad):
        a._accumulate(grad * exponent * a.data ** (exponent - 1.0), owned=True)

    return _make(out_data, (a,), backward_fn)


# ----------------------------------------------------------------------
# activations and transcendental maps

def relu(a):
    a = as_tensor(a)
    mask = a.data > 0

    def backward_fn(grad):
        a._accumulate(grad * mask, owned=True)

    return _make(np.where(mask, a.data, 0.0), (a,), backward_fn)


def silu(a):
    """x * sigmoid(x); the smooth gate used as the spline base map."""
    a = as_tensor(a)
    sig = 1.0 / (1.0 + np.exp(-a.data))
    out_data = a.data * sig

    def backward_fn(grad):
        a._accumulate(grad * (sig * (1.0 + a.data * (1.0 - sig))), owned=True)

    return _make(out_data, (a,), backward_fn)


def tanh(a):
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def backward_fn(grad):
        a._accumulate(grad * (1.0 - out_data * out_data), owned=True)

    return _make(out_data, (a,), backward_fn)


def exp(a):
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward_fn(grad):
        a._accumulate(grad * out_data, owned=True)

    return _make(out_data, (a,), backward_fn)


def log(a):
    a = as_tensor(a)

    def backward_fn(grad):
        a._accumulate(grad / a.data, owned=True)

    return _make(np.log(a.data), (a,), backward_fn)


def activation(a, mode):
    """Dispatch helper: mode is one of relu | silu | tanh."""
    try:
        return {"relu": relu, "silu": silu, "tanh": tanh}[mode](a)
    except KeyError:
        raise ValueError(f"unknown activation mode {mode!r}") from None


# ----------------------------------------------------------------------
# reductions and shape manipulation

def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(grad):
        g = grad
        if not keepdims and axis is not None:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            axes = tuple(ax % a.ndim for ax in axes)
            for ax in sorted(axes):
                g = np.expand_dims(g, ax)
        a._accumulate(np.ascontiguousarray(np.broadcast_to(g, a.shape)), owned=True)

    return _make(out_data, (a,), backward_fn)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = 1
        for ax in axes:
            count *= a.shape[ax % a.ndim]
    return sum_(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a, *shape):
    a = as_tensor(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    old_shape = a.shape

    def backward_fn(grad):
        a._accumulate(grad.reshape(old_shape))

    return _make(a.data.reshape(shape), (a,), backward_fn)


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = np.argsort(axes)

    def backward_fn(grad):
        a._accumulate(np.ascontiguousarray(grad.transpose(inverse)), owned=True)

    return _make(np.ascontiguousarray(a.data.transpose(axes)), (a,), backward_fn)


def concat(tensors, axis=0):
    """Concatenate along ``axis``; all other extents must agree."""
    if not tensors:
        raise ShapeError("concat of an empty tensor list")
    tensors = [as_tensor(t) for t in tensors]
    axis = axis % tensors[0].ndim
    ref = list(tensors[0].shape)
    for t in tensors[1:]:
        probe = list(t.shape)
        if len(probe) != len(ref) or any(
            probe[i] != ref[i] for i in range(len(ref)) if i != axis
        ):
            raise ShapeError(f"concat shape mismatch off axis {axis}: {ref} vs {probe}")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward_fn(grad):
        pieces = np.split(grad, splits, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t._accumulate(np.ascontiguousarray(piece), owned=True)

    return _make(out_data, tuple(tensors), backward_fn)


def take_slice(a, key):
    """Basic slicing as a copying tape op (no strided views kept alive)."""
    a = as_tensor(a)
    out_data = np.asarray(a.data[key]).copy()

    def backward_fn(grad):
        full = np.zeros_like(a.data)
        full[key] = grad
        a._accumulate(full, owned=True)

    return _make(out_data, (a,), backward_fn)


def take(a, indices, axis):
    """Gather along one axis with an integer index array.

    Output shape replaces ``a.shape[axis]`` with ``indices.shape``;
    duplicate indices accumulate additively in the backward pass.
    """
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)
    axis = axis % a.ndim
    out_data = np.take(a.data, indices, axis=axis)

    def backward_fn(grad):
        full = np.zeros_like(a.data)
        key = (slice(None),) * axis + (indices,)
        np.add.at(full, key, grad)
        a._accumulate(full, owned=True)

    return _make(out_data, (a,), backward_fn)


# ----------------------------------------------------------------------
# linear algebra

def matmul(a, b):
    """Matrix product on the trailing two axes.

    Leading axes, when present, must match exactly (stacked matmul); the
    classic 2-D case is ``[m,k] @ [k,n] -> [m,n]``.
    """
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul leading extents differ: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward_fn(grad):
        if a.requires_grad:
            a._accumulate(grad @ np.swapaxes(b.data, -1, -2), owned=True)
        if b.requires_grad:
            b._accumulate(np.swapaxes(a.data, -1, -2) @ grad, owned=True)

    return _make(out_data, (a, b), backward_fn)


# ----------------------------------------------------------------------
# softmax family

def softmax(a, axis=-1):
    """Max-stabilized exponential normalization along ``axis``."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(grad):
        inner = (grad * out_data).sum(axis=axis, keepdims=True)
        a._accumulate(out_data * (grad - inner), owned=True)

    return _make(out_data, (a,), backward_fn)


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - log_z
    soft = np.exp(out_data)

    def backward_fn(grad):
        a._accumulate(grad - soft * grad.sum(axis=axis, keepdims=True), owned=True)

    return _make(out_data, (a,), backward_fn)


def affine_norm(x, gamma, beta, reduce_axes, param_axis, eps=1e-5):
    """Zero-mean/unit-variance over ``reduce_axes`` then a per-feature affine.

    One fused op covers both normalization kinds: layernorm reduces over
    the feature axis itself, batchnorm reduces over (batch, height,
    width) with parameters on the channel axis.  Returns
    ``(out, mean, var)`` with the statistics as plain arrays (biased
    variance), which batchnorm feeds into its running estimates.
    """
    x = as_tensor(x)
    gamma = as_tensor(gamma, like=x)
    beta = as_tensor(beta, like=x)
    reduce_axes = tuple(ax % x.ndim for ax in reduce_axes)
    param_axis = param_axis % x.ndim
    pshape = [1] * x.ndim
    pshape[param_axis] = x.shape[param_axis]

    mean = x.data.mean(axis=reduce_axes, keepdims=True)
    centered = x.data - mean
    var = (centered * centered).mean(axis=reduce_axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    g_b = gamma.data.reshape(pshape)
    out_data = xhat * g_b + beta.data.reshape(pshape)
    grad_axes = tuple(ax for ax in range(x.ndim) if ax != param_axis)

    def backward_fn(grad):
        if gamma.requires_grad:
            gamma._accumulate((grad * xhat).sum(axis=grad_axes), owned=True)
        if beta.requires_grad:
            beta._accumulate(grad.sum(axis=grad_axes), owned=True)
        if x.requires_grad:
            dxhat = grad * g_b
            term = dxhat.mean(axis=reduce_axes, keepdims=True)
            term2 = (dxhat * xhat).mean(axis=reduce_axes, keepdims=True)
            x._accumulate(inv * (dxhat - term - xhat * term2), owned=True)

    out = _make(out_data, (x, gamma, beta), backward_fn)
    return out, mean.reshape(-1), var.reshape(-1)


# ----------------------------------------------------------------------
# spatial ops (NCHW layout)

def _conv_output_extent(extent, kernel, stride, pad):
    return (extent + 2 * pad - kernel) // stride + 1


def _im2col(x, kh, kw, stride, pad):
    """Extract sliding windows: [B,C,H,W] -> [B, C, kh, kw, Ho, Wo] (copy)."""
    b, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = _conv_output_extent(h, kh, stride, pad)
    wo = _conv_output_extent(w, kw, stride, pad)
    sb, sc, sh, sw = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        shape=(b, c, kh, kw, ho, wo),
        strides=(sb, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    return np.ascontiguousarray(view), ho, wo


def conv2d(x, weight, bias=None, stride=1, padding=0, groups=1):
    """2-D cross-correlation with optional channel groups.

    ``x`` is [B,C_in,H,W]; ``weight`` is [C_out, C_in/groups, kh, kw].
    ``groups == C_in`` with matching C_out gives a depthwise pass.
    """
    x = as_tensor(x)
    weight = as_tensor(weight, like=x)
    b, c_in, h, w = x.shape
    c_out, c_in_g, kh, kw = weight.shape
    if c_in % groups or c_out % groups:
        raise ShapeError(f"channels {c_in}->{c_out} not divisible by groups={groups}")
    if c_in_g != c_in // groups:
        raise ShapeError(f"weight expects {c_in_g} channels/group, input gives {c_in // groups}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}")

    if kh == kw == 1 and stride == 1 and padding == 0 and groups == 1:
        return _conv2d_pointwise(x, weight, bias)
    if groups == c_in and c_out == c_in:
        return _conv2d_depthwise(x, weight, bias, stride, padding)

    cols, ho, wo = _im2col(x.data, kh, kw, stride, padding)
    # stacked GEMM: [1, g, out_g, cg*kh*kw] @ [B, g, cg*kh*kw, Ho*Wo]
    cols_g = cols.reshape(b, groups, c_in_g * kh * kw, ho * wo)
    w_g = weight.data.reshape(groups, c_out // groups, c_in_g * kh * kw)
    out_data = (w_g[None] @ cols_g).reshape(b, c_out, ho, wo)
    if bias is not None:
        bias = as_tensor(bias, like=x)
        out_data = out_data + bias.data.reshape(1, c_out, 1, 1)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward_fn(grad):
        grad_g = grad.reshape(b, groups, c_out // groups, ho * wo)
        if weight.requires_grad:
            gw = (grad_g @ cols_g.swapaxes(-1, -2)).sum(axis=0)
            weight._accumulate(gw.reshape(weight.shape), owned=True)
        if bias is not None and bias.requires_grad:
            bias._accumulate(grad.sum(axis=(0, 2, 3)), owned=True)
        if x.requires_grad:
            gcols = w_g.swapaxes(-1, -2)[None] @ grad_g
            gcols = gcols.reshape(b, c_in, kh, kw, ho, wo)
            gx = np.zeros((b, c_in, h + 2 * padding, w + 2 * padding), dtype=x.data.dtype)
            for i in range(kh):
                for j in range(kw):
                    gx[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += gcols[:, :, i, j]
            if padding:
                gx = gx[:, :, padding : padding + h, padding : padding + w]
            x._accumulate(np.ascontiguousarray(gx), owned=True)

    return _make(out_data, parents, backward_fn)


def _conv2d_depthwise(x, weight, bias, stride, padding):
    """Per-channel convolution as k*k shifted fused multiply-adds."""
    b, c, h, w = x.shape
    _, _, kh, kw = weight.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    ho = _conv_output_extent(h, kh, stride, padding)
    wo = _conv_output_extent(w, kw, stride, padding)
    out_data = np.zeros((b, c, ho, wo), dtype=x.data.dtype)
    for i in range(kh):
        for j in range(kw):
            out_data += weight.data[:, 0, i, j].reshape(1, c, 1, 1) * xp[
                :, :, i : i + ho * stride : stride, j : j + wo * stride : stride
            ]
    if bias is not None:
        bias = as_tensor(bias, like=x)
        out_data += bias.data.reshape(1, c, 1, 1)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward_fn(grad):
        if weight.requires_grad:
            gw = np.empty_like(weight.data)
            for i in range(kh):
                for j in range(kw):
                    window = xp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride]
                    gw[:, 0, i, j] = (grad * window).sum(axis=(0, 2, 3))
            weight._accumulate(gw, owned=True)
        if bias is not None and bias.requires_grad:
            bias._accumulate(grad.sum(axis=(0, 2, 3)), owned=True)
        if x.requires_grad:
            gxp = np.zeros((b, c, h + 2 * padding, w + 2 * padding), dtype=x.data.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += (
                        weight.data[:, 0, i, j].reshape(1, c, 1, 1) * grad
                    )
            if padding:
                gxp = gxp[:, :, padding : padding + h, padding : padding + w]
            x._accumulate(np.ascontiguousarray(gxp), owned=True)

    return _make(out_data, parents, backward_fn)


def _conv2d_pointwise(x, weight, bias):
    """1x1/stride-1 convolution as a single GEMM over flattened positions."""
    b, c_in, h, w = x.shape
    c_out = weight.shape[0]
    w2d = weight.data.reshape(c_out, c_in)
    flat = x.data.reshape(b, c_in, h * w)
    out_data = (w2d[None] @ flat).reshape(b, c_out, h, w)
    if bias is not None:
        bias = as_tensor(bias, like=x)
        out_data = out_data + bias.data.reshape(1, c_out, 1, 1)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward_fn(grad):
        gflat = grad.reshape(b, c_out, h * w)
        if weight.requires_grad:
            gw = (gflat @ flat.swapaxes(-1, -2)).sum(axis=0)
            weight._accumulate(gw.reshape(weight.shape), owned=True)
        if bias is not None and bias.requires_grad:
            bias._accumulate(grad.sum(axis=(0, 2, 3)), owned=True)
        if x.requires_grad:
            gx = (w2d.T[None] @ gflat).reshape(b, c_in, h, w)
            x._accumulate(gx, owned=True)

    return _make(out_data, parents, backward_fn)


def avgpool2d(x, window, stride=None):
    """Mean over non-overlapping (or strided) square windows."""
    x = as_tensor(x)
    stride = stride or window
    b, c, h, w = x.shape
    if window > h or window > w:
        raise ShapeError(f"pool window {window} exceeds input {h}x{w}")
    cols, ho, wo = _im2col(x.data, window, window, stride, 0)
    out_data = cols.mean(axis=(2, 3))
    inv = 1.0 / (window * window)

    def backward_fn(grad):
        gx = np.zeros_like(x.data)
        g = grad * inv
        for i in range(window):
            for j in range(window):
                gx[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += g
        x._accumulate(gx)

    return _make(out_data, (x,), backward_fn)


def upsample_nearest(array, out_h, out_w):
    """Nearest-neighbor resize of a plain 2-D numpy map (not a tape op)."""
    h, w = array.shape
    rows = (np.arange(out_h) * h) // out_h
    cols = (np.arange(out_w) * w) // out_w
    return array[rows][:, cols]
