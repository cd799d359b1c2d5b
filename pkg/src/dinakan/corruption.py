"""Minimal deterministic image corruptions for the robustness pipeline.

These exist to exercise the metrics machinery, not to model acquisition
physics: each kind has a fixed five-entry severity table chosen so the
distortion magnitude grows strictly with severity, and every output is
clipped back to [0, 1].  Noise draws are a pure function of the seed.
"""

from __future__ import annotations

import numpy as np

GAUSSIAN_SIGMA = (0.04, 0.08, 0.12, 0.18, 0.26)
CONTRAST_UP_SCALE = (1.2, 1.4, 1.6, 1.8, 2.0)
CONTRAST_DOWN_SCALE = (0.8, 0.675, 0.55, 0.425, 0.3)
BLUR_RADIUS = (1, 2, 3, 4, 5)

KINDS = ("gaussian_noise", "contrast_up", "contrast_down", "defocus_blur")


def severity_parameter(kind, severity):
    """The magnitude table entry for (kind, severity in 1..5)."""
    if not 1 <= severity <= 5:
        raise ValueError(f"severity must be 1..5, got {severity}")
    table = {
        "gaussian_noise": GAUSSIAN_SIGMA,
        "contrast_up": CONTRAST_UP_SCALE,
        "contrast_down": CONTRAST_DOWN_SCALE,
        "defocus_blur": BLUR_RADIUS,
    }
    if kind not in table:
        raise ValueError(f"unknown corruption {kind!r}; choose from {KINDS}")
    return table[kind][severity - 1]


def _box_blur(img, radius):
    """Mean filter with reflect padding, window 2*radius + 1 per axis."""
    size = 2 * radius + 1
    padded = np.pad(img, ((0, 0), (radius, radius), (radius, radius)), mode="reflect")
    # running-sum along each spatial axis
    csum = np.cumsum(padded, axis=1)
    csum = np.concatenate([np.zeros_like(csum[:, :1]), csum], axis=1)
    rows = (csum[:, size:] - csum[:, :-size]) / size
    csum = np.cumsum(rows, axis=2)
    csum = np.concatenate([np.zeros_like(csum[:, :, :1]), csum], axis=2)
    return (csum[:, :, size:] - csum[:, :, :-size]) / size


def corrupt_image(img, kind, severity, seed=0):
    """Apply one corruption at a severity in 1..5 to a [C,H,W] image in [0,1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3:
        raise ValueError(f"expected [C,H,W], got shape {img.shape}")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image values must lie in [0,1]")
    p = severity_parameter(kind, severity)
    if kind == "gaussian_noise":
        rng = np.random.default_rng(seed)
        out = img + rng.normal(scale=p, size=img.shape)
    elif kind in ("contrast_up", "contrast_down"):
        out = 0.5 + p * (img - 0.5)
    else:  # defocus_blur
        out = _box_blur(img, int(p))
    return np.clip(out, 0.0, 1.0)


def corrupt_dataset(images, kind, severity, seed=0):
    """Corrupt a stack [N,C,H,W]; image i uses seed ``seed + i``."""
    return np.stack([
        corrupt_image(images[i], kind, severity, seed=seed + i) for i in range(images.shape[0])
    ])
