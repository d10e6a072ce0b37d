"""Dataset assembly, trial-level cross-validation, region analysis and PSD export."""
from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from .ensemble import BoostParams, ForestParams, evaluate, train_boosted
from .errors import ValidationError
from .memd import SiftConfig, decompose
from .nonlinear_features import (IMF_FEATURES, PAIR_FEATURE, DEFAULT_SELECTED_FEATURES,
                                 FeatureVector, extract_memd_features)
from .signal_model import EMOTIV_REGIONS, ClassLabel, bandpass_filter, segment
from .spectral_features import SUBBANDS, extract_dft_features, extract_dwt_features, welch_psd


class FeatureMode(enum.Enum):
    MEMD = "memd"
    DWT = "dwt"
    DFT = "dft"
    MEMD_DWT = "memd-dwt"

    @classmethod
    def parse(cls, value) -> "FeatureMode":
        if isinstance(value, FeatureMode):
            return value
        text = str(value).strip().lower().replace("_", "-")
        for m in cls:
            if m.value == text:
                return m
        raise ValidationError(f"unknown feature mode {value!r}")


@dataclass(frozen=True)
class CvConfig:
    folds: int = 5
    repeats: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ValidationError("folds must be >= 2")
        if self.repeats < 1:
            raise ValidationError("repeats must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    feature_mode: FeatureMode = FeatureMode.MEMD
    sift: SiftConfig = field(default_factory=SiftConfig)
    selected_imfs: tuple = (1, 2, 3, 4, 5)
    selected_features: tuple = DEFAULT_SELECTED_FEATURES
    hybrid_subbands: tuple = ("D1", "D2")
    cv: CvConfig = field(default_factory=CvConfig)
    boost: BoostParams = field(default_factory=BoostParams)
    regions: tuple | None = None  # channel subset
    region_groups: dict = field(default_factory=lambda: {k: tuple(v) for k, v in EMOTIV_REGIONS.items()})
    frame_s: float = 15.0
    overlap_s: float = 10.0
    band_hz: tuple | None = (2.0, 45.0)  # None disables filtering
    higuchi_kmax: int = 10
    entropy_bins: int = 16

    def __post_init__(self):
        object.__setattr__(self, "feature_mode", FeatureMode.parse(self.feature_mode))
        object.__setattr__(self, "selected_imfs", tuple(int(i) for i in self.selected_imfs))
        object.__setattr__(self, "selected_features", tuple(self.selected_features))
        object.__setattr__(self, "hybrid_subbands", tuple(self.hybrid_subbands))
        if self.regions is not None:
            object.__setattr__(self, "regions", tuple(self.regions))
        if self.band_hz is not None:
            object.__setattr__(self, "band_hz", tuple(float(b) for b in self.band_hz))
        known = set(IMF_FEATURES) | {PAIR_FEATURE}
        unknown = [f for f in self.selected_features if f not in known]
        if unknown:
            raise ValidationError(f"unknown MEMD features {unknown}")
        if not self.selected_imfs or min(self.selected_imfs) < 1 or max(self.selected_imfs) > self.sift.max_imfs:
            raise ValidationError(f"selected_imfs must lie in 1..{self.sift.max_imfs}")
        bad = [b for b in self.hybrid_subbands if b not in SUBBANDS]
        if bad:
            raise ValidationError(f"unknown subbands {bad}")

    def with_mode(self, mode) -> "ExperimentConfig":
        return replace(self, feature_mode=FeatureMode.parse(mode))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, cv=replace(self.cv, seed=int(seed)),
                       boost=replace(self.boost, forest=replace(self.boost.forest, seed=int(seed))))

    def to_dict(self) -> dict:
        return {
            "feature_mode": self.feature_mode.value,
            "sift": self.sift.to_dict(),
            "selected_imfs": list(self.selected_imfs),
            "selected_features": list(self.selected_features),
            "hybrid_subbands": list(self.hybrid_subbands),
            "cv": asdict(self.cv),
            "boost": {"rounds": self.boost.rounds, "forest": asdict(self.boost.forest)},
            "regions": list(self.regions) if self.regions is not None else None,
            "region_groups": {k: list(v) for k, v in self.region_groups.items()},
            "frame_s": self.frame_s,
            "overlap_s": self.overlap_s,
            "band_hz": list(self.band_hz) if self.band_hz is not None else None,
            "higuchi_kmax": self.higuchi_kmax,
            "entropy_bins": self.entropy_bins,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d or {})
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown config keys {sorted(extra)}")
        try:
            if "sift" in d:
                d["sift"] = SiftConfig(**d["sift"])
            if "cv" in d:
                d["cv"] = CvConfig(**d["cv"])
            if "boost" in d:
                b = dict(d["boost"])
                b["forest"] = ForestParams(**b.get("forest", {}))
                d["boost"] = BoostParams(**b)
            if "region_groups" in d:
                d["region_groups"] = {k: tuple(v) for k, v in d["region_groups"].items()}
            return cls(**d)
        except TypeError as exc:
            raise ValidationError(f"bad config: {exc}") from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        """Read a YAML or JSON experiment file."""
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"no such config file: {path}")
        text = path.read_text()
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            import yaml
            data = yaml.safe_load(text)
        if data is not None and not isinstance(data, dict):
            raise ValidationError("config must be a mapping")
        return cls.from_dict(data)


@dataclass(frozen=True)
class LabeledSample:
    features: FeatureVector
    label: ClassLabel
    trial_id: str
    start_s: float = 0.0
    imf_correlation: np.ndarray | None = None  # mean |r| per IMF over channels

    @property
    def y(self) -> int:
        return self.label.sign


def _memd_vector(frame, cfg: ExperimentConfig, imfs=None):
    from .selection import imf_raw_correlation
    stack = decompose(frame.samples, cfg.sift)
    imfs = cfg.selected_imfs if imfs is None else imfs
    fs = extract_memd_features(stack, imfs, frame.channel_labels, cfg.higuchi_kmax, cfg.entropy_bins)
    vec = fs.to_vector()
    mask = [_base_name(n) in cfg.selected_features for n in vec.names]
    return vec.subset(mask), imf_raw_correlation(stack, frame.samples)


def _base_name(column: str) -> str:
    """``AF3_imf2_mobility`` -> ``mobility``; ``AF3_imf1-2_fluctuation_index`` -> ``fluctuation_index``."""
    for f in IMF_FEATURES + (PAIR_FEATURE,):
        if column.endswith("_" + f):
            return f
    return column.rsplit("_", 1)[-1]


def frame_features(frame, cfg: ExperimentConfig, imfs=None):
    """Feature vector for one frame per ``cfg.feature_mode`` plus the IMF correlations (or None)."""
    mode = cfg.feature_mode
    if mode is FeatureMode.DFT:
        return extract_dft_features(frame), None
    if mode is FeatureMode.DWT:
        return extract_dwt_features(frame), None
    vec, corr = _memd_vector(frame, cfg, imfs)
    if mode is FeatureMode.MEMD_DWT:
        vec = vec.concat(extract_dwt_features(frame, cfg.hybrid_subbands))
    return vec, corr


def prepare_frames(recordings, cfg: ExperimentConfig):
    frames = []
    for rec in recordings:
        if cfg.band_hz is not None:
            rec = bandpass_filter(rec, *cfg.band_hz)
        frames.extend(segment(rec, cfg.frame_s, cfg.overlap_s))
    return frames


def build_dataset(recordings, cfg: ExperimentConfig, imfs=None) -> list[LabeledSample]:
    """Filter, segment and featurise every recording; ``imfs`` overrides the IMF selection."""
    out = []
    for frame in prepare_frames(recordings, cfg):
        vec, corr = frame_features(frame, cfg, imfs)
        out.append(LabeledSample(vec, frame.label, frame.trial_id, frame.start_s, corr))
    return out


def design_matrix(dataset, columns=None):
    """(X, y, trial_ids, names) with columns in the order of ``columns`` (default: all)."""
    if not dataset:
        raise ValidationError("empty dataset")
    names = dataset[0].features.names
    if columns is None:
        idx = np.arange(len(names))
        cols = names
    else:
        pos = {n: i for i, n in enumerate(names)}
        missing = [c for c in columns if c not in pos]
        if missing:
            raise ValidationError(f"unknown feature columns {missing[:5]}")
        idx = np.array([pos[c] for c in columns], dtype=int)
        cols = tuple(columns)
    for s in dataset:
        if s.features.names != names:
            raise ValidationError(f"sample {s.trial_id}@{s.start_s} has a different feature layout")
    X = np.array([s.features.values[idx] for s in dataset], dtype=float).reshape(len(dataset), len(idx))
    y = np.array([s.y for s in dataset], dtype=int)
    trials = np.array([s.trial_id for s in dataset], dtype=object)
    return X, y, trials, tuple(cols)


def restrict_channels(dataset, channels) -> list[LabeledSample]:
    """Keep only the feature columns owned by ``channels``."""
    channels = set(channels)
    out = []
    for s in dataset:
        mask = [c in channels for c in s.features.channels]
        out.append(replace(s, features=s.features.subset(mask)))
    return out


def fold_partitions(trial_ids, folds: int, repeats: int, seed: int):
    """Per repeat, a list of ``folds`` arrays of test trial ids.

    Depends only on the sorted distinct trial ids and the seed, so every
    feature mode sees the same partitions.
    """
    trials = np.array(sorted(set(trial_ids)), dtype=object)
    if trials.size < folds:
        raise ValidationError(f"{trials.size} trials cannot fill {folds} folds")
    parts = []
    for r in range(repeats):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), r]))
        perm = trials[rng.permutation(trials.size)]
        parts.append([np.sort(p) for p in np.array_split(perm, folds)])
    return parts


def zscore_fit(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return mu, sd


@dataclass
class FoldResult:
    repeat: int
    fold: int
    n_train: int
    n_test: int
    accuracy: float
    confusion: np.ndarray


@dataclass
class CvReport:
    folds: list
    config: dict

    @property
    def fold_accuracies(self) -> np.ndarray:
        return np.array([f.accuracy for f in self.folds])

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracies))

    @property
    def std_accuracy(self) -> float:
        return float(np.std(self.fold_accuracies))

    @property
    def confusion(self) -> np.ndarray:
        return np.sum([f.confusion for f in self.folds], axis=0)

    def write_csv(self, path, label: str | None = None) -> None:
        write_cv_reports({label or "all": self}, path)


def cross_validate(dataset, cfg: ExperimentConfig, columns=None) -> CvReport:
    """Repeated trial-level k-fold CV of the boosted forest on ``dataset``."""
    X, y, trials, _ = design_matrix(dataset, columns)
    if np.unique(y).size < 2:
        raise ValidationError("dataset has a single class")
    results = []
    for r, parts in enumerate(fold_partitions(trials, cfg.cv.folds, cfg.cv.repeats, cfg.cv.seed)):
        for f, test_trials in enumerate(parts):
            test = np.isin(trials, test_trials)
            train = ~test
            if np.unique(y[train]).size < 2:
                raise ValidationError(f"repeat {r} fold {f}: training data has a single class")
            mu, sd = zscore_fit(X[train])
            forest = replace(cfg.boost.forest, seed=_fold_seed(cfg.cv.seed, r, f))
            model = train_boosted((X[train] - mu) / sd, y[train], replace(cfg.boost, forest=forest))
            res = evaluate(model, (X[test] - mu) / sd, y[test])
            results.append(FoldResult(r, f, int(train.sum()), int(test.sum()),
                                      res["accuracy"], res["confusion"]))
    return CvReport(results, cfg.to_dict())


def _fold_seed(seed: int, repeat: int, fold: int) -> int:
    return int(np.random.SeedSequence([int(seed), repeat, fold, 1]).generate_state(1)[0])


def cv_evaluator(cfg: ExperimentConfig):
    """Evaluator for the rankers: mean CV accuracy on a given column subset."""
    def run(dataset, columns):
        return cross_validate(dataset, cfg, columns).mean_accuracy
    return run


def evaluate_regions(dataset, region_groups: dict, cfg: ExperimentConfig, regions=None) -> dict:
    """Cross-validate on each region's channels; ``regions`` picks a subset of group names."""
    names = list(region_groups) if regions is None else list(regions)
    unknown = [r for r in names if r not in region_groups]
    if unknown:
        raise ValidationError(f"unknown region labels {unknown}")
    if dataset:
        present = set(dataset[0].features.channels)
        for r in names:
            if not present & set(region_groups[r]):
                raise ValidationError(f"region {r} has no channels in the dataset")
    return {r: cross_validate(restrict_channels(dataset, region_groups[r]), cfg) for r in names}


def _fmt(v: float) -> str:
    return repr(float(v))


def write_cv_reports(reports: dict, path) -> None:
    """One row per (group, repeat, fold) then one summary row per group."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "repeat", "fold", "n_train", "n_test", "accuracy",
                    "true_relax_pred_relax", "true_relax_pred_working",
                    "true_working_pred_relax", "true_working_pred_working"])
        for g, rep in reports.items():
            for f in rep.folds:
                w.writerow([g, f.repeat, f.fold, f.n_train, f.n_test, _fmt(f.accuracy),
                            *f.confusion.ravel().tolist()])
        for g, rep in reports.items():
            w.writerow([g, "mean", "", "", "", _fmt(rep.mean_accuracy),
                        *rep.confusion.ravel().tolist()])
            w.writerow([g, "std", "", "", "", _fmt(rep.std_accuracy), "", "", "", ""])


def write_config_echo(cfg: ExperimentConfig, report_path, extra: dict | None = None) -> Path:
    """Write ``<report>.config.json`` next to a report."""
    report_path = Path(report_path)
    echo = report_path.with_name(report_path.stem + ".config.json")
    data = cfg.to_dict()
    if extra:
        data["run"] = extra
    echo.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return echo


def write_features_csv(dataset, path) -> None:
    path = Path(path)
    if not dataset:
        path.write_text("trial_id,start_s,label\n")
        return
    _, _, _, names = design_matrix(dataset)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial_id", "start_s", "label", *names])
        for s in dataset:
            w.writerow([s.trial_id, _fmt(s.start_s), s.label.value, *map(_fmt, s.features.values)])


def read_features_csv(path) -> list[LabeledSample]:
    """Inverse of :func:`write_features_csv`; channel ownership is the name prefix."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:3] != ["trial_id", "start_s", "label"]:
        raise ValidationError(f"{path} is not a feature table")
    names = tuple(rows[0][3:])
    owners = tuple(n.split("_", 1)[0] for n in names)
    out = []
    for r in rows[1:]:
        if len(r) != len(rows[0]):
            raise ValidationError(f"{path}: ragged row")
        try:
            vals = np.array([float(v) for v in r[3:]])
            start = float(r[1])
        except ValueError:
            raise ValidationError(f"{path}: malformed numeric data") from None
        out.append(LabeledSample(FeatureVector(names, vals, owners), ClassLabel.parse(r[2]),
                                 r[0], start))
    return out


def export_psd(recordings, out_path, cfg: ExperimentConfig | None = None):
    """Mean Welch PSD per (channel, state) as CSV; returns (freqs, table dict)."""
    if not recordings:
        raise ValidationError("no recordings")
    fs = recordings[0].sample_rate
    labels = recordings[0].channel_labels
    for rec in recordings:
        if rec.sample_rate != fs or rec.channel_labels != labels:
            raise ValidationError("recordings differ in sample rate or channel layout")
    acc = {}
    freqs = None
    for rec in recordings:
        if cfg is not None and cfg.band_hz is not None:
            rec = bandpass_filter(rec, *cfg.band_hz)
        for iv in rec.state_timeline:
            block = rec.samples[:, int(round(iv.start_s * fs)):int(round(iv.end_s * fs))]
            f, p = welch_psd(block, fs)
            if freqs is None:
                freqs = f
            elif f.shape != freqs.shape:
                raise ValidationError("state intervals of different length give different PSD grids")
            acc.setdefault(iv.label, []).append(p)
    if freqs is None:
        raise ValidationError("recordings carry no state intervals")
    table = {lab: np.mean(ps, axis=0) for lab, ps in acc.items()}
    with Path(out_path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["channel", "state", *[f"{x:g}" for x in freqs]])
        for c, ch in enumerate(labels):
            for lab in ClassLabel:
                if lab in table:
                    w.writerow([ch, lab.value, *map(_fmt, table[lab][c])])
    return freqs, table
