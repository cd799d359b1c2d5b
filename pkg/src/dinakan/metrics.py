"""Balanced accuracy and corruption-robustness aggregates.

Robustness scoring normalizes a model's balanced errors against a
reference model's errors on the same corruptions:

* per-corruption error ratio: sum of the five severity errors divided
  by the reference sum;
* relative degradation ratio: sum of (severity error - clean error)
  divided by the reference's same sum;
* overall figures are arithmetic means over the corruption set, with
  optional per-category means.

The reference error table is an input artifact (text file, one
``corruption,severity,balanced_error`` record per line, severity 0
holding the clean error, ``#`` comments allowed).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


def confusion_matrix(labels, predictions, n_classes):
    labels = np.asarray(labels, dtype=np.intp)
    predictions = np.asarray(predictions, dtype=np.intp)
    if labels.shape != predictions.shape:
        raise ValueError(f"length mismatch: {labels.shape} labels vs {predictions.shape} predictions")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels outside [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, predictions), 1)
    return cm


def balanced_accuracy(labels, predictions, n_classes):
    """Macro-averaged per-class recall (mean of sensitivity and specificity
    in the binary case).  Classes with zero support are excluded with a
    warning."""
    cm = confusion_matrix(labels, predictions, n_classes)
    support = cm.sum(axis=1)
    present = support > 0
    if not present.any():
        raise ValueError("no samples")
    if not present.all():
        warnings.warn(f"{int((~present).sum())} classes with zero support excluded")
    recall = cm.diagonal()[present] / support[present]
    return float(recall.mean())


def balanced_error(labels, predictions, n_classes):
    return 1.0 - balanced_accuracy(labels, predictions, n_classes)


# ----------------------------------------------------------------------
# severity tables

N_SEVERITIES = 5


@dataclass
class SeverityErrors:
    corruption: str
    errors: list            # balanced errors at severities 1..5
    clean_error: float

    def __post_init__(self):
        if len(self.errors) != N_SEVERITIES:
            raise ValueError(f"expected {N_SEVERITIES} severity errors, got {len(self.errors)}")
        for e in list(self.errors) + [self.clean_error]:
            if not 0.0 <= e <= 1.0:
                raise ValueError(f"balanced error {e} outside [0,1]")


class BaselineErrorTable:
    """Reference balanced errors keyed by (corruption, severity); severity 0 is clean."""

    def __init__(self, entries=None):
        self.entries = dict(entries or {})

    def clean(self):
        return self.entries[("clean", 0)]

    def get(self, corruption, severity):
        try:
            return self.entries[(corruption, severity)]
        except KeyError:
            raise KeyError(f"baseline table has no entry for {corruption!r} severity {severity}") from None

    def severity_sum(self, corruption):
        return sum(self.get(corruption, s) for s in range(1, N_SEVERITIES + 1))

    @classmethod
    def parse(cls, text):
        entries = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected corruption,severity,error - got {raw!r}")
            name, severity, value = parts[0], int(parts[1]), float(parts[2])
            if not 0 <= severity <= N_SEVERITIES:
                raise ValueError(f"line {lineno}: severity {severity} outside 0..{N_SEVERITIES}")
            key = ("clean", 0) if severity == 0 and name == "clean" else (name, severity)
            entries[key] = value
        return cls(entries)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def dump(self):
        lines = ["# corruption,severity,balanced_error"]
        for (name, severity), value in sorted(self.entries.items()):
            lines.append(f"{name},{severity},{value:.6f}")
        return "\n".join(lines) + "\n"


def corruption_error_ratio(errors: SeverityErrors, baseline: BaselineErrorTable):
    """Severity-summed balanced error, normalized by the reference sum."""
    denom = baseline.severity_sum(errors.corruption)
    if denom <= 0:
        raise ValueError(f"baseline severity sum for {errors.corruption!r} is not positive")
    return float(sum(errors.errors) / denom)


def relative_error_ratio(errors: SeverityErrors, baseline: BaselineErrorTable):
    """Degradation beyond clean error, normalized by the reference degradation.

    Returns None (with a warning) when the reference shows no degradation
    for this corruption, in which case the value is undefined and the
    corruption is excluded from overall means.
    """
    base_clean = baseline.clean()
    denom = sum(
        baseline.get(errors.corruption, s) - base_clean for s in range(1, N_SEVERITIES + 1)
    )
    if denom <= 0:
        warnings.warn(
            f"baseline degradation for {errors.corruption!r} is not positive; ratio undefined"
        )
        return None
    num = sum(e - errors.clean_error for e in errors.errors)
    return float(num / denom)


@dataclass
class RobustnessReport:
    bacc_clean: float
    bacc_corrupted: float
    per_corruption_be: dict
    per_corruption_rbe: dict
    overall_be: float
    overall_rbe: float
    category_be: dict = field(default_factory=dict)
    category_rbe: dict = field(default_factory=dict)

    def csv(self):
        lines = ["record,name,value"]
        lines.append(f"summary,bACC_clean,{self.bacc_clean:.6f}")
        lines.append(f"summary,bACC,{self.bacc_corrupted:.6f}")
        lines.append(f"summary,BE,{self.overall_be:.6f}")
        lines.append(f"summary,rBE,{self.overall_rbe:.6f}")
        for name in sorted(self.per_corruption_be):
            lines.append(f"corruption_BE,{name},{self.per_corruption_be[name]:.6f}")
        for name in sorted(self.per_corruption_rbe):
            value = self.per_corruption_rbe[name]
            lines.append(f"corruption_rBE,{name},{value:.6f}" if value is not None
                         else f"corruption_rBE,{name},undefined")
        for name in sorted(self.category_be):
            lines.append(f"category_BE,{name},{self.category_be[name]:.6f}")
        for name in sorted(self.category_rbe):
            lines.append(f"category_rBE,{name},{self.category_rbe[name]:.6f}")
        return "\n".join(lines) + "\n"


def aggregate(per_corruption, baseline, bacc_clean, categories=None):
    """Combine per-corruption severity errors into the full report.

    ``per_corruption`` maps name -> SeverityErrors; ``categories``
    optionally maps corruption name -> category label for grouped means.
    Corruptions whose relative ratio is undefined are excluded from the
    relative mean (a warning is already emitted per corruption).
    """
    if not per_corruption:
        raise ValueError("at least one corruption is required")
    be = {}
    rbe = {}
    for name, errors in per_corruption.items():
        if errors.corruption != name:
            raise ValueError(f"key {name!r} does not match record {errors.corruption!r}")
        be[name] = corruption_error_ratio(errors, baseline)
        rbe[name] = relative_error_ratio(errors, baseline)
    defined = [v for v in rbe.values() if v is not None]
    if not defined:
        raise ValueError("relative error undefined for every corruption")
    mean_severity_error = float(
        np.mean([e for errors in per_corruption.values() for e in errors.errors])
    )
    category_be = {}
    category_rbe = {}
    if categories:
        buckets = {}
        for name in per_corruption:
            buckets.setdefault(categories.get(name, "other"), []).append(name)
        for cat, names in sorted(buckets.items()):
            category_be[cat] = float(np.mean([be[n] for n in names]))
            defined_cat = [rbe[n] for n in names if rbe[n] is not None]
            if defined_cat:
                category_rbe[cat] = float(np.mean(defined_cat))
    return RobustnessReport(
        bacc_clean=bacc_clean,
        bacc_corrupted=1.0 - mean_severity_error,
        per_corruption_be=be,
        per_corruption_rbe=rbe,
        overall_be=float(np.mean(list(be.values()))),
        overall_rbe=float(np.mean(defined)),
        category_be=category_be,
        category_rbe=category_rbe,
    )
