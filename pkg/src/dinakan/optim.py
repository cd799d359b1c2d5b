"""Decoupled-weight-decay Adam and the step learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    lr: float = 1e-3
    decay_epochs: tuple = (50, 75)
    decay_factor: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    eps: float = 1e-8
    seed: int = 0
    input_size: int = 224

    def __post_init__(self):
        decays = tuple(self.decay_epochs)
        if any(b <= a for a, b in zip(decays, decays[1:])):
            raise ValueError(f"decay epochs must strictly increase: {decays}")
        if decays and decays[-1] >= self.epochs:
            raise ValueError(f"decay epochs {decays} must precede epoch count {self.epochs}")
        self.decay_epochs = decays


# the two published training recipes: the default benchmark schedule and
# the longer low-rate schedule used for the larger non-benchmark datasets
TRAIN_PRESETS = {
    "standard": dict(epochs=100, batch_size=128, lr=1e-3, decay_epochs=(50, 75)),
    "extended": dict(epochs=150, batch_size=64, lr=1e-4, decay_epochs=()),
}


def train_config_preset(name, **overrides):
    if name not in TRAIN_PRESETS:
        raise ValueError(f"unknown training preset {name!r}; choose from {sorted(TRAIN_PRESETS)}")
    options = dict(TRAIN_PRESETS[name])
    options.update(overrides)
    return TrainConfig(**options)


def lr_at(epoch, cfg):
    """Piecewise-constant schedule: the base rate times decay_factor per passed milestone."""
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    n_decays = sum(1 for d in cfg.decay_epochs if epoch >= d)
    return cfg.lr * cfg.decay_factor ** n_decays


def adamw_step(theta, grad, m, v, t, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=1e-4):
    """One decoupled-decay Adam update on plain arrays (also the scalar oracle).

    theta <- theta - lr*wd*theta - lr * m_hat / (sqrt(v_hat) + eps) with
    bias-corrected first/second moments; returns (theta, m, v).
    """
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    theta = theta - lr * weight_decay * theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta, m, v


class AdamW:
    """Optimizer over a model's named parameters.

    Keeps per-parameter moment arrays keyed by parameter name so the
    state round-trips through checkpoints; a non-finite gradient aborts
    the step with a diagnostic naming the parameter.
    """

    def __init__(self, named_params, cfg: TrainConfig):
        self.named_params = [(name, p) for name, p in named_params if p.trainable]
        self.cfg = cfg
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.named_params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.named_params}

    def step(self, lr):
        self.t += 1
        c = self.cfg
        for name, p in self.named_params:
            grad = p.grad
            if grad is None:
                grad = np.zeros_like(p.data)
            elif not np.all(np.isfinite(grad)):
                raise FloatingPointError(f"non-finite gradient in {name}; step {self.t} aborted")
            p.data, self.m[name], self.v[name] = adamw_step(
                p.data, grad, self.m[name], self.v[name], self.t, lr,
                beta1=c.beta1, beta2=c.beta2, eps=c.eps, weight_decay=c.weight_decay,
            )

    def zero_grad(self):
        for _, p in self.named_params:
            p.zero_grad()

    def state_tensors(self):
        """Moment arrays and step counter under the reserved "opt." prefix."""
        out = {"opt.step": np.asarray([float(self.t)])}
        for name, _ in self.named_params:
            out[f"opt.m.{name}"] = self.m[name]
            out[f"opt.v.{name}"] = self.v[name]
        return out

    def load_state_tensors(self, tensors):
        self.t = int(tensors["opt.step"].reshape(-1)[0])
        for name, p in self.named_params:
            m = tensors[f"opt.m.{name}"]
            v = tensors[f"opt.v.{name}"]
            if m.shape != p.data.shape or v.shape != p.data.shape:
                raise ValueError(f"optimizer state shape mismatch for {name}")
            self.m[name] = m.astype(p.data.dtype)
            self.v[name] = v.astype(p.data.dtype)
