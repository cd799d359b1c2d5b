"""Training loop, evaluation metrics, and the ROC-AUC calculator.

Training is deterministic given the seed: epoch ``e`` shuffles with a
generator seeded by ``(seed, e)``, so a run resumed from a checkpoint
at any epoch boundary replays exactly the batches the uninterrupted run
would have seen.  The optimizer step is the single serialization point
per model instance; evaluation batches are independent and safe to farm
out.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .metrics import balanced_accuracy
from .optim import AdamW, TrainConfig, lr_at
from .tensor import Tensor


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer labels under the logits."""
    labels = np.asarray(labels, dtype=np.intp)
    b, k = logits.shape
    onehot = np.zeros((b, k), dtype=logits.data.dtype)
    onehot[np.arange(b), labels] = 1.0
    log_probs = T.log_softmax(logits, axis=-1)
    return T.sum_(log_probs * Tensor(onehot)) * (-1.0 / b)


def accuracy(predictions, labels):
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    return float((predictions == labels).mean()) if labels.size else 0.0


def roc_auc(labels, scores):
    """Area under the ROC curve for binary labels and real scores.

    Computed as the Mann-Whitney statistic with tied scores averaged,
    which equals the trapezoidal area over score thresholds and the
    pairwise-concordance probability with ties worth one half.
    """
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def multiclass_auc(labels, probabilities):
    """Macro one-vs-rest AUC; classes missing from the labels are skipped."""
    labels = np.asarray(labels)
    aucs = []
    for cls in range(probabilities.shape[1]):
        binary = (labels == cls).astype(np.int64)
        value = roc_auc(binary, probabilities[:, cls])
        if value is not None:
            aucs.append(value)
    if not aucs:
        return None
    if len(aucs) < probabilities.shape[1]:
        warnings.warn("classes absent from the labels were skipped in the macro AUC")
    return float(np.mean(aucs))


def refresh_batchnorm_stats(model, images, batch_size=64):
    """Recompute batchnorm running statistics from a dataset pass.

    Short training runs leave the running estimates dominated by their
    initialization; this replaces them with the arithmetic mean of the
    batch statistics over the given images (a cumulative moving average),
    which is what eval-mode normalization should see.
    """
    from .nn import BatchNorm2d

    norms = [m for m in model.modules() if isinstance(m, BatchNorm2d)]
    if not norms:
        return model
    model.train()
    dtype = model.head.weight.data.dtype
    count = 0
    for start in range(0, images.shape[0], batch_size):
        batch = images[start : start + batch_size]
        if batch.shape[0] == 1:
            continue
        for bn in norms:
            bn.momentum = 1.0 / (count + 1)
        model.forward_logits(Tensor(batch.astype(dtype)))
        count += 1
    for bn in norms:
        bn.momentum = 0.1
    model.eval()
    return model


def predict_proba(model, images, batch_size=64):
    """Eval-mode class probabilities for an [N,C,H,W] stack."""
    model.eval()
    chunks = []
    for start in range(0, images.shape[0], batch_size):
        probs = model(Tensor(images[start : start + batch_size]))
        chunks.append(probs.data)
    return np.concatenate(chunks, axis=0)


def evaluate(model, dataset, batch_size=64):
    """Top-1 accuracy, AUC, and balanced accuracy on a dataset."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    probs = predict_proba(model, dataset.images, batch_size=batch_size)
    preds = probs.argmax(axis=1)
    present = np.unique(dataset.labels)
    if present.size < 2:
        auc = None
    elif dataset.num_classes == 2:
        auc = roc_auc(dataset.labels, probs[:, 1])
    else:
        auc = multiclass_auc(dataset.labels, probs)
    return {
        "acc": accuracy(preds, dataset.labels),
        "auc": auc,
        "bacc": balanced_accuracy(dataset.labels, preds, dataset.num_classes),
    }


@dataclass
class EpochLog:
    epoch: int
    lr: float
    loss: float
    train_acc: float
    val_acc: float | None = None


@dataclass
class TrainResult:
    log: list = field(default_factory=list)

    @property
    def final(self):
        return self.log[-1] if self.log else None


def train(model, dataset, cfg: TrainConfig, val_dataset=None, optimizer=None,
          start_epoch=0, end_epoch=None, stop_fn=None, verbose=False):
    """Run the shuffled-minibatch loop from ``start_epoch``.

    Returns ``(TrainResult, optimizer)``; pass the optimizer (and the
    checkpointed epoch) back in to resume.  ``stop_fn(log_entry)`` may
    return True to stop early.  A non-finite loss aborts with an error.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    if dataset.num_classes != model.cfg.num_classes:
        raise ValueError(
            f"model has {model.cfg.num_classes} classes, dataset {dataset.num_classes}"
        )
    if optimizer is None:
        optimizer = AdamW(model.named_parameters(), cfg)
    end_epoch = cfg.epochs if end_epoch is None else end_epoch
    result = TrainResult()
    n = len(dataset)
    dtype = model.head.weight.data.dtype
    for epoch in range(start_epoch, end_epoch):
        model.train()
        lr = lr_at(epoch, cfg)
        rng = np.random.default_rng([cfg.seed, epoch])
        order = rng.permutation(n)
        loss_sum = 0.0
        hits = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if idx.size == 1:
                continue  # batchnorm rejects singleton training batches
            images = Tensor(dataset.images[idx].astype(dtype))
            labels = dataset.labels[idx]
            logits = model.forward_logits(images)
            loss = cross_entropy(logits, labels)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step(lr)
            loss_sum += loss_value * idx.size
            hits += int((logits.data.argmax(axis=1) == labels).sum())
        entry = EpochLog(epoch=epoch, lr=lr, loss=loss_sum / n, train_acc=hits / n)
        if val_dataset is not None:
            entry.val_acc = evaluate(model, val_dataset, batch_size=cfg.batch_size)["acc"]
        result.log.append(entry)
        if verbose:
            print(f"epoch {epoch}: lr {lr:g} loss {entry.loss:.4f} acc {entry.train_acc:.3f}"
                  + (f" val {entry.val_acc:.3f}" if entry.val_acc is not None else ""))
        if stop_fn is not None and stop_fn(entry):
            break
    return result, optimizer
