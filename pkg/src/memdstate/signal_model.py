"""Recordings, frames, ingestion, bandpass filtering and segmentation."""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import filtfilt, firwin

from .errors import ChannelMismatch, InvalidBand, SegmentationError, ValidationError

# EMOTIV EPOC+ montage: 6 frontal, 4 temporal, 4 parietal/occipital channels.
EMOTIV_CHANNELS = ("AF3", "F7", "F3", "FC5", "T7", "P7", "O1",
                   "O2", "P8", "T8", "FC6", "F4", "F8", "AF4")
EMOTIV_REGIONS = {
    "frontal": ("AF3", "AF4", "F7", "F8", "F3", "F4"),
    "temporal": ("FC5", "T7", "T8", "FC6"),
    "parietal": ("P7", "O1", "O2", "P8"),
}
REGION_TAGS = ("frontal", "temporal", "parietal")


class ClassLabel(enum.Enum):
    RELAX = "Relax"
    WORKING = "Working"

    @property
    def sign(self) -> int:
        """Binary encoding used by the classifiers: Relax -> -1, Working -> +1."""
        return -1 if self is ClassLabel.RELAX else 1

    @classmethod
    def parse(cls, value) -> "ClassLabel":
        if isinstance(value, ClassLabel):
            return value
        text = str(value).strip().lower()
        for member in cls:
            if member.value.lower() == text:
                return member
        raise ValidationError(f"unknown class label {value!r}")

    @classmethod
    def from_sign(cls, s: int) -> "ClassLabel":
        return cls.WORKING if s > 0 else cls.RELAX


@dataclass(frozen=True)
class StateInterval:
    start_s: float
    end_s: float
    label: ClassLabel


def region_map_from_groups(groups: dict) -> dict:
    return {ch: region for region, chans in groups.items() for ch in chans}


@dataclass(frozen=True)
class MultichannelRecording:
    samples: np.ndarray  # (channels, time), microvolts
    sample_rate: float
    channel_labels: tuple
    region_map: dict = field(default_factory=dict)
    state_timeline: tuple = ()
    trial_id: str = ""
    subject: str = ""
    session: str = ""

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channel_labels", tuple(self.channel_labels))
        object.__setattr__(self, "state_timeline", tuple(self.state_timeline))
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive")
        if samples.shape[0] < 1:
            raise ValidationError("recording needs at least one channel")
        if len(self.channel_labels) != samples.shape[0]:
            raise ChannelMismatch(
                f"{len(self.channel_labels)} channel labels for {samples.shape[0]} channels")
        duration = self.duration_s
        ordered = sorted(self.state_timeline, key=lambda iv: iv.start_s)
        for iv in ordered:
            if iv.start_s < 0 or iv.end_s <= iv.start_s:
                raise ValidationError(f"bad interval {iv}")
            if iv.end_s > duration + 1e-9:
                raise ValidationError(
                    f"interval ends at {iv.end_s}s, recording lasts {duration}s")
        for a, b in zip(ordered, ordered[1:]):
            if b.start_s < a.end_s:
                raise ValidationError(f"overlapping intervals {a} and {b}")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return self.samples.shape[1] / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "MultichannelRecording":
        return MultichannelRecording(samples, self.sample_rate, self.channel_labels,
                                     self.region_map, self.state_timeline,
                                     self.trial_id, self.subject, self.session)


@dataclass(frozen=True)
class MultichannelFrame:
    samples: np.ndarray  # (channels, frame_len)
    sample_rate: float
    label: ClassLabel
    trial_id: str
    channel_labels: tuple
    start_s: float = 0.0
    subject: str = ""
    session: str = ""

    def __post_init__(self):
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError(f"frame at {self.start_s}s of {self.trial_id} has non-finite samples")


def _parse_manifest(manifest) -> dict:
    if isinstance(manifest, (str, Path)):
        manifest = json.loads(Path(manifest).read_text())
    missing = [k for k in ("sample_rate_hz", "channels") if k not in manifest]
    if missing:
        raise ValidationError(f"manifest missing keys: {missing}")
    return manifest


def load_recording(path, manifest) -> MultichannelRecording:
    """Read a CSV (rows = time, columns = channels) described by a manifest.

    ``manifest`` is a dict or a path to a JSON file with ``sample_rate_hz``,
    ``channels``, optional ``regions`` (channel -> region or region ->
    channels), ``timeline`` entries ``{start_s, end_s, label}`` and the
    provenance fields ``trial_id``, ``subject``, ``session``.
    """
    path = Path(path)
    meta = _parse_manifest(manifest)
    channels = [str(c) for c in meta["channels"]]
    if not path.exists():
        raise ValidationError(f"no such file: {path}")

    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ValidationError(f"{path} is empty")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: malformed numeric data ({exc})") from None
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValidationError(f"{path}: no samples")
    if len({len(r) for r in rows}) != 1:
        raise ValidationError(f"{path}: ragged rows")
    if data.shape[1] != len(channels):
        raise ChannelMismatch(
            f"{path}: manifest declares {len(channels)} channels, file has {data.shape[1]}")
    if header is not None:
        if sorted(header) != sorted(channels):
            raise ChannelMismatch(f"{path}: header {header} does not match manifest {channels}")
        data = data[:, [header.index(c) for c in channels]]
    if not np.all(np.isfinite(data)):
        raise ValidationError(f"{path}: non-finite samples")

    regions = meta.get("regions") or {}
    if regions and all(isinstance(v, (list, tuple)) for v in regions.values()):
        regions = region_map_from_groups(regions)
    timeline = tuple(StateInterval(float(iv["start_s"]), float(iv["end_s"]),
                                   ClassLabel.parse(iv["label"]))
                     for iv in meta.get("timeline", []))
    return MultichannelRecording(
        samples=data.T, sample_rate=float(meta["sample_rate_hz"]),
        channel_labels=tuple(channels), region_map=dict(regions),
        state_timeline=timeline,
        trial_id=str(meta.get("trial_id", path.stem)),
        subject=str(meta.get("subject", "")), session=str(meta.get("session", "")))


def save_recording(rec: MultichannelRecording, csv_path, manifest_path=None) -> None:
    """Write ``rec`` as CSV with a header row plus a JSON manifest beside it."""
    csv_path = Path(csv_path)
    manifest_path = Path(manifest_path) if manifest_path else csv_path.with_suffix(".json")
    np.savetxt(csv_path, rec.samples.T, delimiter=",", header=",".join(rec.channel_labels),
               comments="", fmt="%.10g")
    meta = {
        "sample_rate_hz": rec.sample_rate,
        "channels": list(rec.channel_labels),
        "regions": dict(rec.region_map),
        "timeline": [{"start_s": iv.start_s, "end_s": iv.end_s, "label": iv.label.value}
                     for iv in rec.state_timeline],
        "trial_id": rec.trial_id, "subject": rec.subject, "session": rec.session,
    }
    manifest_path.write_text(json.dumps(meta, indent=2))


def load_dataset(directory) -> list[MultichannelRecording]:
    """Load every ``*.csv`` in ``directory`` that has a ``.json`` manifest beside it."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ValidationError(f"not a directory: {directory}")
    recs = []
    for csv_path in sorted(directory.glob("*.csv")):
        manifest = csv_path.with_suffix(".json")
        if manifest.exists():
            recs.append(load_recording(csv_path, manifest))
    return recs


def fir_order(sample_rate: float, low_hz: float) -> int:
    order = math.ceil(4.0 * sample_rate / low_hz)
    return order if order % 2 == 1 else order + 1


def bandpass_filter(rec: MultichannelRecording, low_hz: float, high_hz: float) -> MultichannelRecording:
    """Zero-phase (forward-backward) Hamming-window FIR bandpass."""
    fs = rec.sample_rate
    if not 0 < low_hz < high_hz < fs / 2:
        raise InvalidBand(f"need 0 < low < high < {fs / 2}, got {low_hz}, {high_hz}")
    numtaps = fir_order(fs, low_hz)
    taps = firwin(numtaps, [low_hz, high_hz], pass_zero=False, window="hamming", fs=fs)
    n = rec.samples.shape[1]
    padlen = min(3 * numtaps, n - 1)
    filtered = filtfilt(taps, [1.0], rec.samples, axis=1, padlen=padlen)
    return rec.with_samples(filtered)


def segment(rec: MultichannelRecording, frame_s: float, overlap_s: float) -> list[MultichannelFrame]:
    """Cut frames of ``frame_s`` seconds advancing by ``frame_s - overlap_s``.

    Frames are cut inside each state interval only, so each one carries a
    single label; leftovers shorter than a frame at interval ends are dropped.
    """
    if not 0 <= overlap_s < frame_s:
        raise SegmentationError("need 0 <= overlap < frame length")
    fs = rec.sample_rate
    hop = frame_s - overlap_s
    frame_len = int(round(frame_s * fs))
    if rec.state_timeline and frame_s > max(iv.end_s - iv.start_s for iv in rec.state_timeline) + 1e-9:
        raise SegmentationError(f"frame of {frame_s}s is longer than every state interval")
    frames = []
    for iv in sorted(rec.state_timeline, key=lambda iv: iv.start_s):
        stop = int(round(iv.end_s * fs))
        k = 0
        while True:
            start_s = iv.start_s + k * hop
            start = int(round(start_s * fs))
            if start + frame_len > stop:
                break
            frames.append(MultichannelFrame(
                samples=rec.samples[:, start:start + frame_len], sample_rate=fs,
                label=iv.label, trial_id=rec.trial_id, channel_labels=rec.channel_labels,
                start_s=start_s, subject=rec.subject, session=rec.session))
            k += 1
    return frames


def label_at(timeline, t_s: float):
    """Label of the interval containing time ``t_s`` (None outside all intervals)."""
    for iv in timeline:
        if iv.start_s <= t_s < iv.end_s:
            return iv.label
    return None
