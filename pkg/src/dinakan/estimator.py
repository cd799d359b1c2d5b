"""Scikit-learn-style classifier facade over the model and trainer.

``DinaKanClassifier`` exposes the conventional estimator surface -
``fit`` / ``predict`` / ``predict_proba`` / ``score`` plus
``get_params`` / ``set_params`` - implemented without a scikit-learn
dependency but compatible with its cloning and pipeline protocols
(constructor arguments are plain stored hyperparameters; fitted state
lives in trailing-underscore attributes).
"""

from __future__ import annotations

import inspect

import numpy as np

from .model import PRESETS, build_preset
from .optim import TrainConfig
from .train import predict_proba, refresh_batchnorm_stats, train


class NotFittedError(RuntimeError):
    pass


def _validate_images(X, channels=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        X = X[:, None, :, :]
    if X.ndim != 4:
        raise ValueError(f"X must be [N,C,H,W] or [N,H,W], got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("X is empty")
    if X.min() < 0.0 or X.max() > 1.0:
        raise ValueError("image values must lie in [0,1]")
    if channels is not None and X.shape[1] != channels:
        if X.shape[1] == 1:
            X = np.repeat(X, channels, axis=1)
        else:
            raise ValueError(f"expected {channels} channels, got {X.shape[1]}")
    return X


class DinaKanClassifier:
    """Image classifier with a fit/predict interface.

    Parameters mirror the training configuration; ``variant`` selects a
    model preset ("micro" by default, sized for CPU work).  Labels may
    be arbitrary hashables; they are mapped to class indices
    internally and ``classes_`` reports them in sorted order.
    """

    def __init__(self, variant="micro", epochs=30, batch_size=32, lr=1e-3,
                 weight_decay=1e-4, decay_epochs=(), seed=0, dtype="float32",
                 val_fraction=0.0, verbose=False):
        self.variant = variant
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.decay_epochs = decay_epochs
        self.seed = seed
        self.dtype = dtype
        self.val_fraction = val_fraction
        self.verbose = verbose

    # -- sklearn protocol ------------------------------------------------
    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [name for name in sig.parameters if name != "self"]

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(f"invalid parameter {key!r} for {type(self).__name__}")
            setattr(self, key, value)
        return self

    # -- estimator surface -----------------------------------------------
    def fit(self, X, y):
        from .data import Dataset

        if self.variant not in PRESETS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {sorted(PRESETS)}")
        X = _validate_images(X, channels=3)
        y = np.asarray(y)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError(f"y must be [N] matching X, got {y.shape} for {X.shape[0]} samples")
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise ValueError("need at least two classes to fit")
        index = {label: i for i, label in enumerate(self.classes_.tolist())}
        labels = np.array([index[v] for v in y.tolist()], dtype=np.int64)

        self.model_ = build_preset(
            self.variant, num_classes=self.classes_.size,
            input_size=X.shape[2], dtype=self.dtype, seed=self.seed,
        )
        cfg = TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            weight_decay=self.weight_decay, decay_epochs=tuple(self.decay_epochs),
            seed=self.seed, input_size=X.shape[2],
        )
        dataset = Dataset(X, labels, self.classes_.size)
        val = None
        if self.val_fraction > 0:
            n_val = max(1, int(len(dataset) * self.val_fraction))
            val = dataset.subset(np.arange(len(dataset) - n_val, len(dataset)), split="val")
            dataset = dataset.subset(np.arange(len(dataset) - n_val))
        result, _ = train(self.model_, dataset, cfg, val_dataset=val, verbose=self.verbose)
        refresh_batchnorm_stats(self.model_, dataset.images, batch_size=self.batch_size)
        self.train_log_ = result.log
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit() before predicting")

    def predict_proba(self, X):
        self._check_fitted()
        X = _validate_images(X, channels=3)
        return predict_proba(self.model_, X.astype(self.model_.head.weight.data.dtype),
                             batch_size=self.batch_size)

    def predict(self, X):
        self._check_fitted()
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    def score(self, X, y):
        self._check_fitted()
        return float((self.predict(X) == np.asarray(y)).mean())
