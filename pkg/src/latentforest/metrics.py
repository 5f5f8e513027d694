"""Downstream utility, distributional similarity and privacy probes."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import wasserstein_distance as _w1

METRIC_SPACES = ("raw", "latent")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion_counts(y_true, y_pred, positive_label: int = 1) -> ConfusionCounts:
    y_true = np.asarray(y_true).ravel()
    y_pred = np.asarray(y_pred).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.size} labels vs {y_pred.size} predictions")
    t = y_true == positive_label
    p = y_pred == positive_label
    return ConfusionCounts(int(np.sum(t & p)), int(np.sum(~t & p)), int(np.sum(~t & ~p)),
                           int(np.sum(t & ~p)))


def classification_metrics(y_true, y_pred, positive_label: int = 1) -> dict:
    """Recall, precision and F1 for the positive label.

    A zero denominator yields 0 for that metric and sets the matching
    ``*_undefined`` flag.
    """
    c = confusion_counts(y_true, y_pred, positive_label)
    recall_undefined = c.tp + c.fn == 0
    precision_undefined = c.tp + c.fp == 0
    recall = 0.0 if recall_undefined else c.tp / (c.tp + c.fn)
    precision = 0.0 if precision_undefined else c.tp / (c.tp + c.fp)
    f1 = 0.0 if recall + precision == 0 else 2 * precision * recall / (precision + recall)
    return {
        "recall": recall,
        "precision": precision,
        "f1": f1,
        "recall_undefined": recall_undefined,
        "precision_undefined": precision_undefined,
        "counts": asdict(c),
    }


def _as_matrix(A, name):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix")
    return A


def wasserstein_per_feature(real, synth) -> np.ndarray:
    real, synth = _as_matrix(real, "real"), _as_matrix(synth, "synth")
    if real.shape[1] != synth.shape[1]:
        raise ValueError(f"column mismatch: {real.shape[1]} vs {synth.shape[1]}")
    if real.shape[0] == 0 or synth.shape[0] == 0:
        raise ValueError("both samples must be non-empty")
    return np.array([_w1(real[:, j], synth[:, j]) for j in range(real.shape[1])])


def wasserstein_distance(real, synth) -> float:
    """Mean over features of the 1-D empirical W1 distance."""
    return float(np.mean(wasserstein_per_feature(real, synth)))


def _check_pair(synth, real):
    synth, real = _as_matrix(synth, "synth"), _as_matrix(real, "real")
    if synth.shape[1] != real.shape[1]:
        raise ValueError(f"column mismatch: {synth.shape[1]} vs {real.shape[1]}")
    return synth, real


def dcr(synth, real) -> dict:
    """Distance from each synthetic row to its nearest real row."""
    synth, real = _check_pair(synth, real)
    if real.shape[0] == 0:
        raise ValueError("real set is empty")
    d = cKDTree(real).query(synth, k=1)[0] if synth.shape[0] else np.zeros(0)
    return {
        "mean": float(d.mean()) if d.size else float("nan"),
        "median": float(np.median(d)) if d.size else float("nan"),
        "per_point": d,
    }


def nndr(synth, real) -> dict:
    """Ratio of nearest to second-nearest real distance per synthetic row."""
    synth, real = _check_pair(synth, real)
    if real.shape[0] < 2:
        raise ValueError("nndr needs at least 2 real rows")
    if synth.shape[0] == 0:
        return {"mean": float("nan"), "per_point": np.zeros(0)}
    d = cKDTree(real).query(synth, k=2)[0]
    d1, d2 = d[:, 0], d[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(d2 > 0, d1 / np.where(d2 > 0, d2, 1.0), 1.0)
    r = np.clip(r, 0.0, 1.0)
    return {"mean": float(r.mean()), "per_point": r}


@dataclass
class MetricsReport:
    classifiers: dict[str, dict]  # name -> classification_metrics output
    wd: float
    dcr_mean: float
    dcr_median: float
    nndr_mean: float
    metric_space: str = "raw"
    timing: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.metric_space not in METRIC_SPACES:
            raise ValueError(f"metric_space must be one of {METRIC_SPACES}")

    def recall(self, classifier: str = "random_forest") -> float:
        return self.classifiers[classifier]["recall"]

    def to_dict(self) -> dict:
        return {
            "classifiers": {k: {m: v for m, v in d.items()} for k, d in self.classifiers.items()},
            "wd": _num(self.wd),
            "dcr_mean": _num(self.dcr_mean),
            "dcr_median": _num(self.dcr_median),
            "nndr_mean": _num(self.nndr_mean),
            "metric_space": self.metric_space,
        }


def _num(v):
    # JSON has no NaN; an empty synthetic set reports null
    return None if v is None or not np.isfinite(v) else float(v)


def similarity_metrics(real, synth) -> dict:
    """WD, DCR and NNDR of ``synth`` against ``real``; NaN when ``synth`` is empty."""
    real = _as_matrix(real, "real")
    synth = _as_matrix(synth, "synth")
    if synth.shape[0] == 0:
        nan = float("nan")
        return {"wd": nan, "dcr_mean": nan, "dcr_median": nan, "nndr_mean": nan}
    dc = dcr(synth, real)
    return {
        "wd": wasserstein_distance(real, synth),
        "dcr_mean": dc["mean"],
        "dcr_median": dc["median"],
        "nndr_mean": nndr(synth, real)["mean"] if real.shape[0] >= 2 else float("nan"),
    }
