"""Sequence data model, CSV ingestion, alignment, normalisation and splits.

All sequences live on a 2 Hz grid: integer millisecond timestamps spaced
500 ms apart. Arrays held by the dataclasses are made read-only on
construction so instances can be shared freely between threads.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyIntersection,
    EmptySegment,
    MalformedCsv,
    NonFiniteValue,
    NonMonotoneTimestamps,
    SubjectMismatch,
)

STEP_MS = 500
DIMENSIONS = ("arousal", "valence")
ROLES = ("train", "dev", "test")
NORM_EPS = 1e-6

# personal_train / personal_dev lengths in label steps (60 s at 2 Hz)
PERSONAL_STEPS = 120


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _check_grid(timestamps, what):
    if timestamps.ndim != 1 or timestamps.size < 2:
        raise NonMonotoneTimestamps(f"{what}: need at least 2 timestamps")
    step = np.diff(timestamps)
    bad = np.flatnonzero(step != STEP_MS)
    if bad.size:
        i = int(bad[0])
        raise NonMonotoneTimestamps(
            f"{what}: timestamps {timestamps[i]} -> {timestamps[i + 1]} "
            f"(row {i + 1}) are not a {STEP_MS} ms step"
        )


def _first_nonfinite(values):
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        return tuple(int(i) for i in bad[0])
    return None


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    subject_id: str
    modality_name: str
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts = _frozen(self.timestamps, np.int64)
        vals = _frozen(self.values, np.float64)
        if vals.ndim != 2:
            raise DimensionMismatch(f"{self.modality_name}: values must be T x n")
        if vals.shape[0] != ts.shape[0]:
            raise DimensionMismatch(
                f"{self.modality_name}: {vals.shape[0]} rows for {ts.shape[0]} timestamps"
            )
        _check_grid(ts, f"{self.subject_id}/{self.modality_name}")
        where = _first_nonfinite(vals)
        if where is not None:
            raise NonFiniteValue(
                f"{self.subject_id}/{self.modality_name}: non-finite value at row {where[0]}, column {where[1]}",
                row=where[0], column=where[1],
            )
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    @property
    def T(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]

    def take(self, idx):
        return FeatureSequence(self.subject_id, self.modality_name, self.timestamps[idx], self.values[idx])


@dataclass(frozen=True, eq=False)
class LabelSequence:
    subject_id: str
    dimension: str
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.dimension not in DIMENSIONS:
            raise ValueError(f"unknown dimension {self.dimension!r}")
        ts = _frozen(self.timestamps, np.int64)
        vals = _frozen(self.values, np.float64)
        if vals.ndim != 1 or vals.shape[0] != ts.shape[0]:
            raise DimensionMismatch(f"{self.subject_id}/{self.dimension}: label length mismatch")
        _check_grid(ts, f"{self.subject_id}/{self.dimension}")
        where = _first_nonfinite(vals)
        if where is not None:
            raise NonFiniteValue(
                f"{self.subject_id}/{self.dimension}: non-finite label at row {where[0]}",
                row=where[0], column=0,
            )
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    @property
    def T(self):
        return self.values.shape[0]

    def take(self, idx):
        return LabelSequence(self.subject_id, self.dimension, self.timestamps[idx], self.values[idx])


@dataclass(frozen=True, eq=False)
class AlignedSample:
    subject_id: str
    modalities: tuple
    labels: Mapping[str, LabelSequence]
    role: str = "train"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        mods = tuple(self.modalities)
        if not mods:
            raise DimensionMismatch(f"{self.subject_id}: sample has no modalities")
        ts = mods[0].timestamps
        for seq in list(mods) + list(self.labels.values()):
            if seq.subject_id != self.subject_id:
                raise SubjectMismatch(f"{seq.subject_id!r} inside sample for {self.subject_id!r}")
            if seq.timestamps.shape != ts.shape or not np.array_equal(seq.timestamps, ts):
                raise DimensionMismatch(f"{self.subject_id}: member sequences are not on one grid")
        object.__setattr__(self, "modalities", mods)
        object.__setattr__(self, "labels", dict(self.labels))

    @property
    def timestamps(self):
        return self.modalities[0].timestamps

    @property
    def T(self):
        return self.modalities[0].T

    @property
    def modality_names(self):
        return tuple(m.modality_name for m in self.modalities)

    @property
    def widths(self):
        return tuple(m.dim for m in self.modalities)

    @property
    def width(self):
        return sum(self.widths)

    def features(self):
        """Concatenated T x N matrix in modality order."""
        return np.concatenate([m.values for m in self.modalities], axis=1)

    def label(self, dimension):
        return self.labels[dimension].values

    def slice(self, start, stop, role=None):
        idx = slice(start, stop)
        return AlignedSample(
            self.subject_id,
            tuple(m.take(idx) for m in self.modalities),
            {k: v.take(idx) for k, v in self.labels.items()},
            role or self.role,
        )

    def select(self, modality_names):
        by_name = {m.modality_name: m for m in self.modalities}
        missing = [n for n in modality_names if n not in by_name]
        if missing:
            raise DimensionMismatch(f"{self.subject_id}: no modality {missing[0]!r}")
        return AlignedSample(self.subject_id, tuple(by_name[n] for n in modality_names), self.labels, self.role)


# --- CSV I/O ----------------------------------------------------------------

def _parse_timestamp(text, path, row):
    try:
        return int(text)
    except ValueError:
        try:
            f = float(text)
        except ValueError:
            raise MalformedCsv(f"{path}: row {row}: bad timestamp {text!r}") from None
        if not f.is_integer():
            raise MalformedCsv(f"{path}: row {row}: timestamp {text!r} is not integer ms")
        return int(f)


def _read_table(path, header_check):
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedCsv(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        header_check(header)
        width = len(header)
        stamps, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise MalformedCsv(f"{path}: line {lineno} has {len(row)} fields, expected {width}")
            stamps.append(_parse_timestamp(row[0], path, lineno))
            rows.append(row[1:])
    try:
        values = np.array(rows, dtype=np.float64).reshape(len(rows), width - 1)
    except ValueError:
        for lineno, row in enumerate(rows, start=2):
            for j, cell in enumerate(row):
                try:
                    float(cell)
                except ValueError:
                    raise MalformedCsv(f"{path}: line {lineno}, column {j + 1}: {cell!r} is not a number") from None
        raise
    stamps = np.array(stamps, dtype=np.int64)
    if stamps.size >= 2:
        d = np.diff(stamps)
        bad = np.flatnonzero(d <= 0)
        if bad.size:
            raise NonMonotoneTimestamps(f"{path}: timestamp at line {int(bad[0]) + 3} does not increase")
    where = _first_nonfinite(values)
    if where is not None:
        raise NonFiniteValue(
            f"{path}: non-finite value at data row {where[0]}, column {header[where[1] + 1]}",
            row=where[0], column=where[1],
        )
    return header, stamps, values


def load_feature_csv(path, expected_dim=None, subject_id=None, modality_name=None):
    """Read ``timestamp,f_0,...,f_{n-1}``.

    ``subject_id`` defaults to the file stem and ``modality_name`` to the name
    of the parent directory, matching the layout written by ``synth``.
    """
    path = Path(path)

    def check(header):
        if len(header) < 2 or header[0] != "timestamp":
            raise MalformedCsv(f"{path}: header must start with 'timestamp' and have feature columns")
        want = [f"f_{i}" for i in range(len(header) - 1)]
        if header[1:] != want:
            raise MalformedCsv(f"{path}: feature columns must be named f_0..f_{len(header) - 2}")

    _, stamps, values = _read_table(path, check)
    if expected_dim is not None and values.shape[1] != expected_dim:
        raise DimensionMismatch(f"{path}: {values.shape[1]} feature columns, expected {expected_dim}")
    return FeatureSequence(
        subject_id if subject_id is not None else path.stem,
        modality_name if modality_name is not None else path.parent.name,
        stamps,
        values,
    )


def load_label_csv(path, dimension, subject_id=None):
    path = Path(path)

    def check(header):
        if header != ["timestamp", "value"]:
            raise MalformedCsv(f"{path}: label header must be 'timestamp,value'")

    _, stamps, values = _read_table(path, check)
    return LabelSequence(subject_id if subject_id is not None else path.stem, dimension, stamps, values[:, 0])


def load_series_csv(path):
    """``timestamp,value`` at any sampling rate; returns ``(timestamps, values)``."""
    path = Path(path)

    def check(header):
        if header != ["timestamp", "value"]:
            raise MalformedCsv(f"{path}: header must be 'timestamp,value'")

    _, stamps, values = _read_table(path, check)
    return stamps, values[:, 0]


def _fmt(x):
    return repr(float(x))


def write_feature_csv(seq, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["timestamp"] + [f"f_{i}" for i in range(seq.dim)]
    lines = [",".join(header)]
    for t, row in zip(seq.timestamps.tolist(), seq.values.tolist()):
        lines.append(str(t) + "," + ",".join(map(_fmt, row)))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_series_csv(timestamps, values, path):
    """``timestamp,value`` writer shared by labels, predictions and raw signals."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = "\n".join(f"{int(t)},{_fmt(v)}" for t, v in zip(np.asarray(timestamps).tolist(), np.asarray(values).tolist()))
    path.write_text("timestamp,value\n" + body + "\n", encoding="utf-8")


def write_label_csv(seq, path):
    write_series_csv(seq.timestamps, seq.values, path)


# --- alignment --------------------------------------------------------------

def align_and_label(features, labels, role="train"):
    """Crop feature and label sequences to their common timestamps."""
    features = list(features)
    labels = list(labels)
    if not features:
        raise EmptyIntersection("no feature sequences given")
    subject = features[0].subject_id
    for seq in features + labels:
        if seq.subject_id != subject:
            raise SubjectMismatch(f"sequence for {seq.subject_id!r} mixed with {subject!r}")
    common = features[0].timestamps
    for seq in features[1:] + labels:
        common = np.intersect1d(common, seq.timestamps, assume_unique=True)
    if common.size < 2:
        raise EmptyIntersection(f"{subject}: fewer than 2 common timestamps across inputs")

    def crop(seq):
        idx = np.searchsorted(seq.timestamps, common)
        return seq.take(idx)

    return AlignedSample(
        subject,
        tuple(crop(f) for f in features),
        {lab.dimension: crop(lab) for lab in labels},
        role,
    )


# --- normalisation ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NormStats:
    names: tuple
    means: tuple
    stds: tuple

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "means", tuple(_frozen(m, np.float64) for m in self.means))
        object.__setattr__(self, "stds", tuple(_frozen(s, np.float64) for s in self.stds))
        if not (len(self.names) == len(self.means) == len(self.stds)):
            raise DimensionMismatch("norm stats: names/means/stds lengths differ")
        for m, s in zip(self.means, self.stds):
            if m.shape != s.shape or m.ndim != 1:
                raise DimensionMismatch("norm stats: mean and std shapes differ")
            if np.any(s < NORM_EPS):
                raise ValueError("norm stats: std below floor")

    @property
    def widths(self):
        return tuple(m.shape[0] for m in self.means)


def fit_norm_stats(train_samples):
    samples = list(train_samples)
    if not samples:
        raise ValueError("fit_norm_stats needs at least one training sample")
    names = samples[0].modality_names
    widths = samples[0].widths
    means, stds = [], []
    for k, name in enumerate(names):
        blocks = []
        for s in samples:
            if s.modality_names != names or s.widths != widths:
                raise DimensionMismatch(f"{s.subject_id}: modality layout differs from {names}")
            blocks.append(s.modalities[k].values)
        pool = np.concatenate(blocks, axis=0)
        mean = pool.mean(axis=0)
        lo, hi = pool.min(axis=0), pool.max(axis=0)
        # exact mean for constant columns so they normalise to exactly 0
        mean = np.where(lo == hi, lo, mean)
        std = np.maximum(pool.std(axis=0), NORM_EPS)
        means.append(mean)
        stds.append(std)
    return NormStats(names, means, stds)


def apply_norm(sample, stats):
    if sample.modality_names != stats.names or sample.widths != stats.widths:
        raise DimensionMismatch(
            f"{sample.subject_id}: layout {list(zip(sample.modality_names, sample.widths))} "
            f"does not match stats {list(zip(stats.names, stats.widths))}"
        )
    mods = tuple(
        FeatureSequence(m.subject_id, m.modality_name, m.timestamps, (m.values - mu) / sd)
        for m, mu, sd in zip(sample.modalities, stats.means, stats.stds)
    )
    return AlignedSample(sample.subject_id, mods, sample.labels, sample.role)


# --- per-subject splits -----------------------------------------------------

@dataclass(frozen=True)
class SubjectSplit:
    subject_id: str
    personal_train: AlignedSample | None
    personal_dev: AlignedSample | None
    personal_test: AlignedSample | None

    def require(self):
        for name in ("personal_train", "personal_dev"):
            if getattr(self, name) is None:
                raise EmptySegment(f"{self.subject_id}: {name} segment is empty")
        return self


def split_subject(sample, train_steps=PERSONAL_STEPS, dev_steps=PERSONAL_STEPS):
    """First 60 s personal train, next 60 s personal dev, remainder test.

    Segments shorter than 2 steps are returned as ``None``.
    """
    T = sample.T
    bounds = [(0, min(train_steps, T)),
              (min(train_steps, T), min(train_steps + dev_steps, T)),
              (min(train_steps + dev_steps, T), T)]
    parts = [sample.slice(a, b) if b - a >= 2 else None for a, b in bounds]
    return SubjectSplit(sample.subject_id, *parts)


# --- corpus manifest --------------------------------------------------------

@dataclass
class ManifestEntry:
    subject_id: str
    role: str
    kind: str      # "feature", "label" or "raw"
    name: str      # modality, dimension or raw signal name
    path: Path


@dataclass
class Manifest:
    """Whitespace-separated lines ``subject role kind:name path``.

    Paths are relative to the manifest's directory. ``#`` starts a comment.
    """
    root: Path
    entries: list = field(default_factory=list)

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"manifest {path} does not exist")
        entries = []
        for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4 or ":" not in parts[2]:
                raise MalformedCsv(f"{path}:{lineno}: expected 'subject role kind:name path'")
            subject, role, key, rel = parts
            kind, name = key.split(":", 1)
            if role not in ROLES:
                raise MalformedCsv(f"{path}:{lineno}: unknown role {role!r}")
            if kind not in ("feature", "label", "raw"):
                raise MalformedCsv(f"{path}:{lineno}: unknown kind {kind!r}")
            entries.append(ManifestEntry(subject, role, kind, name, Path(rel)))
        return cls(path.parent, entries)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["# subject role kind:name path"]
        for e in self.entries:
            lines.append(f"{e.subject_id} {e.role} {e.kind}:{e.name} {e.path.as_posix()}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    def resolve(self, entry):
        return entry.path if entry.path.is_absolute() else self.root / entry.path

    def subjects(self, role=None):
        seen = {}
        for e in self.entries:
            if role is None or e.role == role:
                seen.setdefault(e.subject_id, e.role)
        return list(seen)

    def role_of(self, subject_id):
        for e in self.entries:
            if e.subject_id == subject_id:
                return e.role
        raise KeyError(subject_id)

    def find(self, subject_id, kind, name):
        for e in self.entries:
            if e.subject_id == subject_id and e.kind == kind and e.name == name:
                return e
        return None

    def modalities(self):
        names = []
        for e in self.entries:
            if e.kind == "feature" and e.name not in names:
                names.append(e.name)
        return names


def load_sample(manifest, subject_id, modalities, dimensions=DIMENSIONS):
    feats = []
    for name in modalities:
        entry = manifest.find(subject_id, "feature", name)
        if entry is None:
            raise DimensionMismatch(f"{subject_id}: manifest has no feature {name!r}")
        feats.append(load_feature_csv(manifest.resolve(entry), subject_id=subject_id, modality_name=name))
    labels = []
    for dim in dimensions:
        entry = manifest.find(subject_id, "label", dim)
        if entry is not None:
            labels.append(load_label_csv(manifest.resolve(entry), dim, subject_id=subject_id))
    return align_and_label(feats, labels, role=manifest.role_of(subject_id))


def load_corpus(manifest, modalities, dimensions=DIMENSIONS, role=None):
    if isinstance(manifest, (str, os.PathLike)):
        manifest = Manifest.load(manifest)
    return [load_sample(manifest, s, modalities, dimensions) for s in manifest.subjects(role)]


def by_role(samples: Iterable[AlignedSample], role: str) -> list:
    return [s for s in samples if s.role == role]
