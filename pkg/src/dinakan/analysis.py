"""Model analysis: receptive fields, channel diversity, class heatmaps.

Receptive fields are computed two ways and must agree: a closed-form
calculus over the attention pattern, and an empirical measurement that
backpropagates from a single output token and reads the support of the
nonzero input gradient.  Channel diversity is the mean pairwise cosine
distance across channel maps (low values flag collapsed features).
Heatmaps weight a chosen layer's activation channels by their pooled
score gradients, rectify, and upsample to the input resolution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .attention import DilatedNeighborhoodAttention1d, MultiHeadSelfAttention
from .tensor import Tensor, upsample_nearest


# ----------------------------------------------------------------------
# receptive fields

def analytic_rf(pattern, k, n_layers, n_tokens, schedule=None):
    """Receptive-field size after each layer for a 1-D token line.

    ``full`` covers all tokens immediately; ``neighborhood`` grows by
    k - 1 per layer; ``dilated`` grows by dilation * (k - 1) per layer,
    following the supplied per-layer schedule.  All values clamp at the
    token count.
    """
    if k % 2 == 0 or k < 1:
        raise ValueError(f"kernel size must be odd and positive, got {k}")
    if n_layers < 1:
        raise ValueError("need at least one layer")
    if pattern == "full":
        return [n_tokens] * n_layers
    if pattern == "neighborhood":
        schedule = [1] * n_layers
    elif pattern == "dilated":
        if schedule is None or len(schedule) != n_layers:
            raise ValueError("dilated pattern needs one dilation per layer")
    else:
        raise ValueError(f"unknown pattern {pattern!r}")
    out = []
    rf = 1
    for d in schedule:
        rf += d * (k - 1)
        out.append(min(n_tokens, rf))
    return out


def rf_upper_bound(k, n_layers, n_tokens):
    """k**layers, capped by the token count."""
    return min(n_tokens, k ** n_layers)


@dataclass
class ReceptiveFieldReport:
    pattern: str
    k: int
    n_tokens: int
    schedule: list
    analytic: list
    upper_bound: int
    empirical: int | None = None
    support: list = field(default_factory=list)

    def rows(self):
        for i, rf in enumerate(self.analytic):
            yield (i + 1, self.schedule[i] if self.schedule else 0, rf)


def empirical_rf(pattern, k, n_tokens, schedule=None, n_layers=None, dim=16,
                 head_dim=8, probe=None, seed=0):
    """Measure the receptive field by gradient support.

    Builds a stack of attention layers (random nonzero weights, zero
    relative bias), backpropagates from one channel of one output token,
    and returns the report with ``empirical`` set to the extent of
    tokens holding an exactly nonzero input gradient.  ``schedule``
    gives one dilation per layer (all ones for plain neighborhood
    attention); ``full`` takes ``n_layers`` instead.
    """
    if pattern == "full":
        n_layers = n_layers or 1
        schedule = [1] * n_layers
    else:
        if not schedule:
            raise ValueError(f"{pattern} pattern needs a per-layer dilation schedule")
        if pattern == "neighborhood" and any(d != 1 for d in schedule):
            raise ValueError("neighborhood pattern means dilation 1 everywhere")
        n_layers = len(schedule)
    analytic = analytic_rf(pattern, k, n_layers, n_tokens, schedule if pattern == "dilated" else None)
    probe = n_tokens // 2 if probe is None else probe
    half = (analytic[-1] - 1) // 2
    if pattern != "full" and (probe - half < 0 or probe + half >= n_tokens):
        raise ValueError(
            f"probe {probe} too near the boundary for receptive field {analytic[-1]}"
        )

    T.set_seed(seed)
    layers = []
    for i in range(n_layers):
        if pattern == "full":
            layers.append(MultiHeadSelfAttention(dim, n_heads=dim // head_dim))
        else:
            layers.append(DilatedNeighborhoodAttention1d(
                dim, k=k, dilation=schedule[i], head_dim=head_dim
            ))
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(1, n_tokens, dim)), requires_grad=True)
    y = x
    for layer in layers:
        y = layer(y)
    y[0, probe, 0].backward()
    token_grad = np.abs(x.grad[0]).max(axis=1)
    support = np.nonzero(token_grad != 0.0)[0]
    extent = int(support.max() - support.min() + 1) if support.size else 0
    return ReceptiveFieldReport(
        pattern=pattern,
        k=k,
        n_tokens=n_tokens,
        schedule=list(schedule) if schedule else [],
        analytic=analytic,
        upper_bound=rf_upper_bound(k, n_layers, n_tokens),
        empirical=extent,
        support=support.tolist(),
    )


# ----------------------------------------------------------------------
# channel-diversity diagnostic

def feature_cosine_distance(x):
    """Mean pairwise channel cosine distance of a [C,H,W] activation.

    All ordered pairs count, diagonal included, each contributing
    (1 - cos) / 2, so the value lies in [0, 1] and identical channels
    give exactly zero.  Pairs touching a zero-norm channel contribute
    the maximal-uncertainty value 0.5 (with a warning).
    """
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected [C,H,W], got shape {arr.shape}")
    c = arr.shape[0]
    flat = arr.reshape(c, -1)
    gram = flat @ flat.T
    sq_norms = np.diag(gram).copy()
    zero = sq_norms == 0.0
    if zero.any():
        warnings.warn(f"{int(zero.sum())} zero-norm channels; their pairs count distance 0.5")
    safe = np.where(zero, 1.0, sq_norms)
    cos = gram / np.sqrt(np.outer(safe, safe))
    # identical channels share all three dot products bitwise; pin their
    # cosine to exactly one so identical maps give distance exactly zero
    same = (gram == sq_norms[None, :]) & (gram == sq_norms[:, None])
    cos[same & ~zero[:, None] & ~zero[None, :]] = 1.0
    cos[zero, :] = 0.0
    cos[:, zero] = 0.0
    np.clip(cos, -1.0, 1.0, out=cos)
    return float(((1.0 - cos) / 2.0).mean())


def cosine_profile(model, images):
    """Per-layer mean channel cosine distance, averaged over images.

    Returns ``[(normalized_layer_index, distance), ...]`` over every
    recorded activation map, index 0 at the first layer and 1 at the
    last.
    """
    x = images if isinstance(images, Tensor) else Tensor(images)
    _, record = model.forward_features(x)
    names = list(record)
    n_layers = len(names)
    out = []
    for i, name in enumerate(names):
        act = record[name].data
        dist = float(np.mean([feature_cosine_distance(act[b]) for b in range(act.shape[0])]))
        frac = i / (n_layers - 1) if n_layers > 1 else 0.0
        out.append((frac, dist))
    return out


def profile_csv(profile):
    lines = ["layer_index_normalized,cosine_distance"]
    lines += [f"{frac:.6f},{dist:.6f}" for frac, dist in profile]
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# class-activation heatmaps

@dataclass
class Heatmap:
    map: np.ndarray           # [H, W], nonnegative, max 1 when nonzero
    target_class: int
    layer_name: str


def grad_cam(model, x, target_class, layer_name):
    """Gradient-weighted class activation map at a named layer.

    The score is the pre-softmax logit of the target class; channel
    weights are the spatial means of the score gradient at the chosen
    activation, combined, rectified, upsampled (nearest) to the input
    resolution, and max-normalized.
    """
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.shape[0] != 1:
        raise ValueError("heatmaps are per-image; pass a single image")
    if hasattr(model, "eval"):
        model.eval()  # single-image batches cannot use training-mode batchnorm
    logits, record = model.forward_features(Tensor(arr, requires_grad=True))
    if layer_name not in record:
        raise KeyError(
            f"unknown layer {layer_name!r}; available: {', '.join(record)}"
        )
    act = record[layer_name]
    if act.ndim != 4:
        raise ValueError(f"layer {layer_name!r} is not spatial (shape {act.shape})")
    if not 0 <= target_class < logits.shape[1]:
        raise ValueError(f"target class {target_class} out of range")
    model.zero_grad()
    logits[0, target_class].backward()
    grads = act.grad[0]                     # [C, h, w]
    weights = grads.mean(axis=(1, 2))
    cam = np.maximum((weights[:, None, None] * act.data[0]).sum(axis=0), 0.0)
    cam = upsample_nearest(cam, arr.shape[2], arr.shape[3])
    peak = cam.max()
    if peak > 0:
        cam = cam / peak
    model.zero_grad()
    return Heatmap(map=cam, target_class=target_class, layer_name=layer_name)


def write_pgm(path, array):
    """Write a [0,1] float map as a binary portable graymap (P5, 8-bit)."""
    arr = np.clip(np.asarray(array, dtype=np.float64), 0.0, 1.0)
    pixels = (arr * 255.0 + 0.5).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
