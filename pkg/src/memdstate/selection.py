"""IMF relevance ranking and per-feature ranking by solo classification accuracy.

An evaluator is any callable ``evaluator(dataset, columns) -> accuracy``;
:func:`memdstate.pipeline.cv_evaluator` gives the standard CV-based one.
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .pipeline import design_matrix


def pearson(a, b) -> float:
    """Sample correlation coefficient; 0 when either series is constant."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("pearson needs two 1-D series of equal length")
    if a.size < 2:
        raise ValidationError("pearson needs at least two samples")
    da = a - a.mean()
    db = b - b.mean()
    sa = np.sqrt(np.dot(da, da))
    sb = np.sqrt(np.dot(db, db))
    if sa == 0 or sb == 0:
        return 0.0
    r = np.dot(da, db) / (sa * sb)
    return float(min(1.0, max(-1.0, r)))


def imf_raw_correlation(stack, raw) -> np.ndarray:
    """Mean over channels of |pearson(IMF_j, raw)| for every IMF j of one frame."""
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    out = np.empty(stack.n_imfs)
    for j in range(stack.n_imfs):
        out[j] = np.mean([abs(pearson(stack.imfs[j, c], raw[c])) for c in range(raw.shape[0])])
    return out


@dataclass(frozen=True)
class ImfRanking:
    imf_indices: tuple
    mean_correlation: np.ndarray
    solo_accuracy: np.ndarray
    selected: tuple

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["imf_index", "mean_correlation", "solo_accuracy", "selected"])
            for i, r, a in zip(self.imf_indices, self.mean_correlation, self.solo_accuracy):
                w.writerow([i, repr(float(r)), repr(float(a)), int(i in self.selected)])


@dataclass(frozen=True)
class FeatureRanking:
    ranked: tuple  # feature names, best first
    solo_accuracy: dict
    selected: tuple

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "feature", "solo_accuracy", "selected"])
            for k, name in enumerate(self.ranked, 1):
                w.writerow([k, name, repr(float(self.solo_accuracy[name])), int(name in self.selected)])


def _check_classes(dataset):
    if not dataset:
        raise ValidationError("empty dataset")
    if len({s.y for s in dataset}) < 2:
        raise ValidationError("dataset has a single class")


def _pick(order_keys, accuracies, k, threshold):
    if threshold is not None:
        return [key for key in order_keys if accuracies[key] >= threshold]
    if k < 1:
        raise ValidationError("k must be >= 1")
    return order_keys[:k]


_IMF_COLUMN = re.compile(r"_imf(\d+)_")


def imf_columns(names) -> dict:
    """Map IMF index -> single-IMF feature columns (pair features excluded)."""
    out = {}
    for n in names:
        m = _IMF_COLUMN.search(n)
        if m:
            out.setdefault(int(m.group(1)), []).append(n)
    return dict(sorted(out.items()))


def rank_imfs(dataset, evaluator, k: int = 5, threshold: float | None = None) -> ImfRanking:
    """Rank IMFs by solo accuracy and report their mean |r| against the raw frame.

    ``dataset`` must carry features for every IMF to rank and per-sample
    correlations. Selection is the top ``k`` (ties to the lower index) or,
    with ``threshold``, every IMF whose solo accuracy reaches it.
    """
    _check_classes(dataset)
    groups = imf_columns(dataset[0].features.names)
    if not groups:
        raise ValidationError("dataset has no per-IMF feature columns")
    if any(s.imf_correlation is None for s in dataset):
        raise ValidationError("dataset lacks IMF correlations (build it from recordings)")
    corr_all = np.mean([s.imf_correlation for s in dataset], axis=0)
    indices = tuple(groups)
    acc = {j: float(evaluator(dataset, groups[j])) for j in indices}
    corr = np.array([corr_all[j - 1] for j in indices])
    order = sorted(indices, key=lambda j: (-acc[j], j))
    selected = tuple(sorted(_pick(order, acc, k, threshold)))
    return ImfRanking(indices, corr, np.array([acc[j] for j in indices]), selected)


def feature_columns(names, feature: str) -> list:
    """Columns named ``feature`` exactly or ending in ``_<feature>``."""
    return [n for n in names if n == feature or n.endswith("_" + feature)]


def rank_features(dataset, feature_names, evaluator, top_m: int = 6,
                  threshold: float | None = None) -> FeatureRanking:
    """Rank features by solo accuracy; descending, ties broken by name."""
    _check_classes(dataset)
    design_matrix(dataset)  # layout consistency check
    names = dataset[0].features.names
    cols = {}
    for f in feature_names:
        c = feature_columns(names, f)
        if not c:
            raise ValidationError(f"unknown feature name {f!r}")
        cols[f] = c
    acc = {f: float(evaluator(dataset, cols[f])) for f in cols}
    ranked = tuple(sorted(acc, key=lambda f: (-acc[f], f)))
    return FeatureRanking(ranked, acc, tuple(_pick(list(ranked), acc, top_m, threshold)))
