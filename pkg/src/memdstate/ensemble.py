"""Decision trees, random forests and discrete AdaBoost over forests.

Labels are encoded -1 / +1 throughout. Sample weights enter a forest
through weighted bootstrap resampling; the trees themselves are fit with
uniform weights on the resample.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ValidationError

MODEL_FORMAT = "memdstate.boosted-ensemble"
MODEL_VERSION = 1
XI_FLOOR = 1e-10


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 8
    min_samples_leaf: int = 2
    features_per_split: int | None = None  # None: every feature


@dataclass(frozen=True)
class ForestParams:
    trees_count: int = 50
    features_per_split: int | None = None  # None: ceil(sqrt(d))
    max_depth: int = 8
    min_samples_leaf: int = 2
    bootstrap: bool = True
    seed: int = 0

    def tree_params(self, n_features: int) -> TreeParams:
        k = self.features_per_split or math.ceil(math.sqrt(n_features))
        return TreeParams(self.max_depth, self.min_samples_leaf, min(max(k, 1), n_features))


@dataclass(frozen=True)
class BoostParams:
    rounds: int = 10
    forest: ForestParams = field(default_factory=ForestParams)


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("empty training set")
    if y.shape != (X.shape[0],):
        raise ValidationError("labels do not match samples")
    if not np.all(np.isin(y, (-1, 1))):
        raise ValidationError("labels must be -1 or +1")
    return X, y.astype(int)


def normalize_weights(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or not np.isfinite(w).all():
        raise ValidationError("sample weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise ValidationError("sample weights sum to zero")
    return w / total


@dataclass
class DecisionTree:
    """Flat binary tree; ``feature[i] < 0`` marks a leaf.

    ``votes[i]`` holds the (negative, positive) training weight that reached
    node ``i``. Samples with ``x[feature] <= threshold`` go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    votes: np.ndarray
    n_features: int

    @property
    def node_count(self) -> int:
        return self.feature.size

    def leaf_ids(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                return node
            go_left = X[rows[active], feat[active]] <= self.threshold[node[active]]
            node[active] = np.where(go_left, self.left[node[active]], self.right[node[active]])

    def predict(self, X) -> np.ndarray:
        v = self.votes[self.leaf_ids(X)]
        return np.where(v[:, 1] >= v[:, 0], 1, -1)

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "votes": self.votes.tolist(), "n_features": self.n_features}

    @classmethod
    def from_dict(cls, d) -> "DecisionTree":
        return cls(np.asarray(d["feature"], dtype=int), np.asarray(d["threshold"], dtype=float),
                   np.asarray(d["left"], dtype=int), np.asarray(d["right"], dtype=int),
                   np.asarray(d["votes"], dtype=float).reshape(-1, 2), int(d["n_features"]))


def _best_split(Xn, pos_w, neg_w, features, min_leaf):
    """Best weighted-Gini split among ``features`` for the node rows ``Xn``."""
    n = Xn.shape[0]
    cols = Xn[:, features]
    order = np.argsort(cols, axis=0, kind="stable")
    xs = np.take_along_axis(cols, order, axis=0)
    lp = np.cumsum(pos_w[order], axis=0)[:-1]
    ln = np.cumsum(neg_w[order], axis=0)[:-1]
    tp, tn = pos_w.sum(), neg_w.sum()
    rp, rn = tp - lp, tn - ln
    lw, rw = lp + ln, rp + rn
    with np.errstate(divide="ignore", invalid="ignore"):
        score = (np.where(lw > 0, (lp * lp + ln * ln) / lw, 0.0)
                 + np.where(rw > 0, (rp * rp + rn * rn) / rw, 0.0))
    sizes = np.arange(1, n)[:, None]
    valid = (xs[:-1] < xs[1:]) & (sizes >= min_leaf) & (n - sizes >= min_leaf)
    if not valid.any():
        return None
    score = np.where(valid, score, -np.inf)
    flat = int(np.argmax(score.T))  # feature-major: first feature wins ties
    f, i = divmod(flat, n - 1)
    parent = (tp * tp + tn * tn) / (tp + tn)
    if score[i, f] <= parent + 1e-12 * (tp + tn):
        return None
    lo, hi = xs[i, f], xs[i + 1, f]
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return features[f], thr


def train_tree(X, y, w=None, params: TreeParams = TreeParams(), seed=0) -> DecisionTree:
    """Greedy weighted-Gini CART tree."""
    X, y = _check_xy(X, y)
    m, d = X.shape
    w = np.full(m, 1.0 / m) if w is None else normalize_weights(w)
    rng = np.random.default_rng(seed)
    k = d if params.features_per_split is None else min(max(params.features_per_split, 1), d)
    pos_w = np.where(y > 0, w, 0.0)
    neg_w = np.where(y < 0, w, 0.0)

    feature, threshold, left, right, votes = [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        votes.append((neg_w[rows].sum(), pos_w[rows].sum()))
        return len(feature) - 1

    stack = [(new_node(np.arange(m)), np.arange(m), 0)]
    while stack:
        node, rows, depth = stack.pop()
        neg, pos = votes[node]
        if depth >= params.max_depth or rows.size < 2 * params.min_samples_leaf or neg == 0 or pos == 0:
            continue
        feats = np.arange(d) if k == d else np.sort(rng.choice(d, size=k, replace=False))
        split = _best_split(X[rows], pos_w[rows], neg_w[rows], feats, params.min_samples_leaf)
        if split is None:
            continue
        f, thr = split
        mask = X[rows, f] <= thr
        feature[node], threshold[node] = int(f), float(thr)
        lrows, rrows = rows[mask], rows[~mask]
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))

    return DecisionTree(np.asarray(feature, dtype=int), np.asarray(threshold, dtype=float),
                        np.asarray(left, dtype=int), np.asarray(right, dtype=int),
                        np.asarray(votes, dtype=float).reshape(-1, 2), d)


@dataclass
class RandomForest:
    trees: list
    params: ForestParams

    @property
    def trees_count(self) -> int:
        return len(self.trees)

    def votes(self, X) -> np.ndarray:
        return np.sum([t.predict(X) for t in self.trees], axis=0)

    def predict(self, X) -> np.ndarray:
        """Unweighted majority vote; ties go to +1."""
        return np.where(self.votes(X) >= 0, 1, -1)

    def to_dict(self) -> dict:
        return {"params": asdict(self.params), "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d) -> "RandomForest":
        return cls([DecisionTree.from_dict(t) for t in d["trees"]], ForestParams(**d["params"]))


def train_forest(X, y, params: ForestParams = ForestParams(), sample_weight=None) -> RandomForest:
    """Forest of CART trees on bootstrap resamples drawn proportionally to ``sample_weight``."""
    X, y = _check_xy(X, y)
    m, d = X.shape
    p = None if sample_weight is None else normalize_weights(sample_weight)
    tparams = params.tree_params(d)
    seeds = np.random.SeedSequence(params.seed).spawn(params.trees_count)
    trees = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        if params.bootstrap:
            idx = rng.choice(m, size=m, replace=True, p=p)
            tree = train_tree(X[idx], y[idx], None, tparams, rng)
        else:
            tree = train_tree(X, y, p, tparams, rng)
        trees.append(tree)
    return RandomForest(trees, params)


def adaboost_alpha(xi: float) -> float:
    """Estimator weight 0.5 ln((1 - xi) / xi), with xi floored away from 0."""
    xi = max(float(xi), XI_FLOOR)
    return 0.5 * math.log((1.0 - xi) / xi)


def reweight(w, y, h, alpha):
    """Multiply by exp(-alpha y h) and renormalise; returns (w_next, Z)."""
    w = np.asarray(w, dtype=float)
    raw = w * np.exp(-alpha * np.asarray(y) * np.asarray(h))
    z = raw.sum()
    return raw / z, float(z)


@dataclass
class RoundResult:
    estimator: RandomForest
    alpha: float
    weights: np.ndarray
    error: float
    normalizer: float


def boost_round(X, y, w, params: ForestParams = ForestParams()) -> RoundResult:
    """Fit one forest on weights ``w``, score its weighted error, update the weights."""
    X, y = _check_xy(X, y)
    w = np.asarray(w, dtype=float)
    forest = train_forest(X, y, params, sample_weight=w)
    h = forest.predict(X)
    xi = float(np.sum(w[h != y]))
    alpha = adaboost_alpha(xi)
    w_next, z = reweight(w, y, h, alpha)
    return RoundResult(forest, alpha, w_next, xi, z)


@dataclass
class BoostedEnsemble:
    estimators: list
    alphas: list
    errors: list = field(default_factory=list)
    normalizers: list = field(default_factory=list)
    n_features: int = 0
    training_accuracy: float = float("nan")

    @property
    def rounds_trained(self) -> int:
        return len(self.estimators)

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValidationError(
                f"expected {self.n_features} features, got {X.shape[1]}")
        score = np.zeros(X.shape[0])
        for alpha, est in zip(self.alphas, self.estimators):
            score += alpha * est.predict(X)
        return score

    def predict(self, X) -> np.ndarray:
        """sign of the alpha-weighted vote; a zero score maps to +1."""
        return np.where(self.decision_function(X) >= 0, 1, -1)

    def to_dict(self) -> dict:
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION,
                "n_features": self.n_features, "alphas": list(self.alphas),
                "errors": list(self.errors), "normalizers": list(self.normalizers),
                "training_accuracy": self.training_accuracy,
                "estimators": [e.to_dict() for e in self.estimators]}

    @classmethod
    def from_dict(cls, d) -> "BoostedEnsemble":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise ValidationError("unsupported model file")
        return cls([RandomForest.from_dict(e) for e in d["estimators"]], list(d["alphas"]),
                   list(d["errors"]), list(d["normalizers"]), int(d["n_features"]),
                   float(d["training_accuracy"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "BoostedEnsemble":
        return cls.from_dict(json.loads(Path(path).read_text()))


def train_boosted(X, y, params: BoostParams = BoostParams()) -> BoostedEnsemble:
    """Discrete AdaBoost with random forests as base learners.

    A round with zero weighted error is kept (alpha from the floored error)
    and ends training. A round with error >= 0.5 is discarded and retried
    once with a fresh bootstrap seed; a second failure ends training.
    """
    X, y = _check_xy(X, y)
    if np.unique(y).size < 2:
        raise ValidationError("training set has a single class")
    m = X.shape[0]
    w = np.full(m, 1.0 / m)
    ens = BoostedEnsemble([], [], n_features=X.shape[1])
    base = params.forest
    for t in range(params.rounds):
        result = None
        for attempt in range(2):
            fp = ForestParams(**{**asdict(base), "seed": _round_seed(base.seed, t, attempt)})
            candidate = boost_round(X, y, w, fp)
            if candidate.error < 0.5:
                result = candidate
                break
        if result is None:
            break
        ens.estimators.append(result.estimator)
        ens.alphas.append(result.alpha)
        ens.errors.append(result.error)
        ens.normalizers.append(result.normalizer)
        w = result.weights
        if result.error == 0:
            break
    if not ens.estimators:
        raise ValidationError("no boosting round reached weighted error below 0.5")
    ens.training_accuracy = float(np.mean(ens.predict(X) == y))
    return ens


def _round_seed(seed: int, round_index: int, attempt: int) -> int:
    return int(np.random.SeedSequence([seed, round_index, attempt]).generate_state(1)[0])


def evaluate(model, X, y) -> dict:
    """Accuracy and 2x2 confusion matrix (rows true -1/+1, columns predicted -1/+1)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise ValidationError("empty test set")
    pred = model.predict(X) if hasattr(model, "predict") else np.asarray(model)
    return score_predictions(y, pred)


def score_predictions(y, pred) -> dict:
    y = np.asarray(y)
    pred = np.asarray(pred)
    if y.size == 0:
        raise ValidationError("empty test set")
    cm = np.zeros((2, 2), dtype=int)
    for ti, t in enumerate((-1, 1)):
        for pi, p in enumerate((-1, 1)):
            cm[ti, pi] = int(np.sum((y == t) & (pred == p)))
    return {"accuracy": float(np.mean(y == pred)), "confusion": cm}
