"""Prediction sequences, ensemble averaging and corpus-level scoring."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, EmptyEnsemble, GridMismatch, MissingPrediction
from .objective import ccc, combined_score
from .seqdata import DIMENSIONS, STEP_MS, load_label_csv, write_series_csv


@dataclass(frozen=True, order=True)
class Provenance:
    combo: str
    seed: int | None = None
    checkpoint_id: str = ""

    @property
    def name(self):
        seed = "-" if self.seed is None else str(self.seed)
        return f"{self.combo}/{seed}/{self.checkpoint_id}"


@dataclass(frozen=True, eq=False)
class PredictionSequence:
    subject_id: str
    dimension: str
    timestamps: np.ndarray
    values: np.ndarray
    provenance: tuple = field(default=())

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype=np.int64, copy=True)
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.ndim != 1 or vals.shape != ts.shape:
            raise GridMismatch(f"{self.subject_id}: prediction values and timestamps differ in length")
        if ts.size >= 2 and np.any(np.diff(ts) != STEP_MS):
            raise GridMismatch(f"{self.subject_id}: prediction timestamps are not a {STEP_MS} ms grid")
        if not np.all(np.isfinite(vals)):
            raise DataError(f"{self.subject_id}/{self.dimension}: non-finite prediction")
        ts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "provenance", tuple(self.provenance))

    @property
    def name(self):
        return "+".join(p.name for p in self.provenance)


def ensemble_mean(members):
    """Element-wise mean, summed in sorted member-name order.

    Computed as ``first + mean(member - first)`` so that averaging identical
    members returns them bit for bit.
    """
    members = list(members)
    if not members:
        raise EmptyEnsemble("ensemble needs at least one member")
    ref = members[0]
    for m in members[1:]:
        if m.subject_id != ref.subject_id or m.dimension != ref.dimension:
            raise GridMismatch(
                f"cannot average {m.subject_id}/{m.dimension} with {ref.subject_id}/{ref.dimension}"
            )
        if not np.array_equal(m.timestamps, ref.timestamps):
            raise GridMismatch(f"{m.subject_id}/{m.dimension}: member grids differ")
    ordered = sorted(members, key=lambda m: m.name)
    anchor = ordered[0].values
    acc = np.zeros_like(anchor)
    for m in ordered[1:]:
        acc += m.values - anchor
    values = anchor + acc / len(ordered)
    prov = tuple(p for m in ordered for p in m.provenance)
    return PredictionSequence(ref.subject_id, ref.dimension, ref.timestamps, values, prov)


def ensemble_corpus(member_sets):
    """Average several prediction sets (one list per member pipeline)."""
    groups = {}
    for preds in member_sets:
        for p in preds:
            groups.setdefault((p.subject_id, p.dimension), []).append(p)
    return [ensemble_mean(groups[k]) for k in sorted(groups)]


@dataclass
class EvalReport:
    rows: list                      # (subject, dimension, ccc)
    means: dict
    combined: float | None

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subject", "dimension", "ccc"])
            for subject, dim, value in self.rows:
                w.writerow([subject, dim, repr(value)])
            for dim, value in self.means.items():
                w.writerow(["mean", dim, repr(value)])
            if self.combined is not None:
                w.writerow(["combined", "all", repr(self.combined)])

    def summary(self):
        parts = [f"{d}={v:.4f}" for d, v in self.means.items()]
        if self.combined is not None:
            parts.append(f"combined={self.combined:.4f}")
        return " ".join(parts)


def summarise(rows):
    """Per-dimension means over subjects and the combined score."""
    by_dim = {}
    for _, dim, value in rows:
        by_dim.setdefault(dim, []).append(value)
    means = {d: float(np.mean(by_dim[d])) for d in DIMENSIONS if d in by_dim}
    if len(means) == 2:
        combined = combined_score(means["arousal"], means["valence"])
    elif means:
        combined = next(iter(means.values()))
    else:
        combined = None
    return means, combined


def evaluate_corpus(preds, samples, dimensions=None):
    """Video-level CCC per subject and dimension.

    ``samples`` are labelled :class:`AlignedSample` objects (or any objects
    with ``subject_id`` and ``labels``). Each prediction is scored against the
    labels at its own timestamps.
    """
    index = {}
    for p in preds:
        key = (p.subject_id, p.dimension)
        if key in index:
            raise GridMismatch(f"duplicate prediction for {key[0]}/{key[1]}")
        index[key] = p
    if dimensions is None:
        dimensions = [d for d in DIMENSIONS if any(k[1] == d for k in index)]
    rows = []
    for dim in dimensions:
        for s in samples:
            if dim not in s.labels:
                continue
            p = index.get((s.subject_id, dim))
            if p is None:
                raise MissingPrediction(f"no {dim} prediction for subject {s.subject_id}", s.subject_id, dim)
            lab = s.labels[dim]
            pos = np.searchsorted(lab.timestamps, p.timestamps)
            if np.any(pos >= lab.T) or not np.array_equal(lab.timestamps[np.minimum(pos, lab.T - 1)], p.timestamps):
                raise GridMismatch(f"{s.subject_id}/{dim}: prediction timestamps are not on the label grid")
            rows.append((s.subject_id, dim, ccc(p.values, lab.values[pos]).ccc))
    means, combined = summarise(rows)
    return EvalReport(rows, means, combined)


# --- prediction files -------------------------------------------------------

def write_predictions(preds, out_dir):
    """``<out_dir>/<dimension>/<subject>.csv`` with ``timestamp,value`` rows."""
    out = Path(out_dir)
    for p in preds:
        write_series_csv(p.timestamps, p.values, out / p.dimension / f"{p.subject_id}.csv")


def read_predictions(pred_dir, combo=None):
    root = Path(pred_dir)
    combo = combo or root.name
    preds = []
    for dim in DIMENSIONS:
        sub = root / dim
        if not sub.is_dir():
            continue
        for f in sorted(sub.glob("*.csv")):
            lab = load_label_csv(f, dim, subject_id=f.stem)
            preds.append(PredictionSequence(f.stem, dim, lab.timestamps, lab.values,
                                            (Provenance(combo, None, f"{root.name}/{dim}/{f.name}"),)))
    return preds
