"""Synthetic corpus with known ground truth.

Each subject gets smooth arousal/valence latents in [-1, 1]. Every modality is
a corpus-wide random linear map of the latents plus a subject-specific
constant offset plus white noise. Part of the offset lies in the span of the
map (a per-subject affect bias), which only personal data can calibrate.
A 1 kHz ECG is rendered whose instantaneous heart rate rises linearly with
arousal, together with the 2 Hz companion signals (downsampled ECG,
respiration rate, heart rate) used by the Phys features. Labels are the
latents themselves.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ecg.peaks import RawSignal
from .ecg.phys import extract_phys_sequence
from .errors import InvalidSpec
from .seqdata import (
    DIMENSIONS,
    STEP_MS,
    AlignedSample,
    FeatureSequence,
    LabelSequence,
    Manifest,
    ManifestEntry,
    write_feature_csv,
    write_label_csv,
    write_series_csv,
)

GRID_DT = STEP_MS / 1000.0

# (centre ms, amplitude, width ms) of the beat template; Q and S mirror each
# other so the QRS is symmetric about the R peak
BEAT_WAVES = (
    (-170.0, 0.12, 25.0),   # P
    (-25.0, -0.15, 8.0),    # Q
    (0.0, 1.0, 10.0),       # R
    (25.0, -0.15, 8.0),     # S
    (280.0, 0.30, 40.0),    # T
)


@dataclass(frozen=True)
class SynthSpec:
    n_train: int = 8
    n_dev: int = 3
    n_test: int = 3
    duration_s: float = 300.0
    modality_dims: tuple = (("audio", 32), ("video", 24))
    noise: float = 0.1
    offset: float = 0.0
    with_ecg: bool = True
    with_phys: bool = False
    ecg_rate: float = 1000.0
    ecg_noise: float = 0.01
    hr_base_bpm: float = 72.0
    hr_gain_bpm: float = 18.0

    def validate(self):
        if min(self.n_train, self.n_dev, self.n_test) < 0 or self.n_subjects < 1:
            raise InvalidSpec("subject counts must be non-negative with at least one subject")
        if not self.duration_s > 0 or int(round(self.duration_s / GRID_DT)) < 2:
            raise InvalidSpec("duration must cover at least two 2 Hz steps")
        if not self.modality_dims:
            raise InvalidSpec("at least one modality is required")
        for name, dim in self.modality_dims:
            if int(dim) < 1:
                raise InvalidSpec(f"modality {name!r} needs a positive dimension")
        if self.noise < 0 or self.offset < 0 or self.ecg_noise < 0:
            raise InvalidSpec("noise and offset magnitudes must be non-negative")
        if self.with_phys and not self.with_ecg:
            raise InvalidSpec("phys features need the ECG")
        if not self.ecg_rate > 0:
            raise InvalidSpec("ECG rate must be positive")
        if self.hr_base_bpm - abs(self.hr_gain_bpm) <= 0:
            raise InvalidSpec("heart rate must stay positive over the latent range")
        return self

    @property
    def n_subjects(self):
        return self.n_train + self.n_dev + self.n_test

    @property
    def steps(self):
        return int(round(self.duration_s / GRID_DT))

    def roles(self):
        return ["train"] * self.n_train + ["dev"] * self.n_dev + ["test"] * self.n_test


@dataclass
class SubjectSignals:
    ecg: RawSignal
    resp: RawSignal
    bpm: RawSignal
    ecg_2hz: RawSignal
    beats: np.ndarray  # true R-peak sample indices


@dataclass
class SyntheticCorpus:
    spec: SynthSpec
    seed: int
    samples: list
    signals: dict = field(default_factory=dict)
    maps: dict = field(default_factory=dict)

    def role(self, role):
        return [s for s in self.samples if s.role == role]


# --- building blocks --------------------------------------------------------

def smooth_latent(rng, steps, dt=GRID_DT):
    """Three random-phase sinusoids (20-120 s periods) plus O-U noise, clipped."""
    t = np.arange(steps) * dt
    periods = rng.uniform(20.0, 120.0, size=3)
    phases = rng.uniform(0.0, 2 * np.pi, size=3)
    amps = rng.uniform(0.15, 0.35, size=3)
    x = (amps[:, None] * np.sin(2 * np.pi * t[None, :] / periods[:, None] + phases[:, None])).sum(axis=0)
    tau, sigma = 8.0, 0.12
    a = np.exp(-dt / tau)
    eps = rng.standard_normal(steps) * sigma * np.sqrt(1 - a * a)
    ou = np.empty(steps)
    ou[0] = rng.standard_normal() * sigma
    for k in range(1, steps):
        ou[k] = a * ou[k - 1] + eps[k]
    return np.clip(x + ou, -1.0, 1.0)


def beat_template(rate):
    half = int(round(0.45 * rate))
    t_ms = np.arange(-half, half + 1) * (1000.0 / rate)
    wave = np.zeros_like(t_ms)
    for centre, amp, width in BEAT_WAVES:
        wave += amp * np.exp(-0.5 * ((t_ms - centre) / width) ** 2)
    return wave, half


def render_ecg(beats, n_samples, rate=1000.0, amplitude=1.0):
    """Stereotyped beats with their R peak at each index of ``beats``."""
    wave, half = beat_template(rate)
    out = np.zeros(n_samples + 2 * half)
    for b in np.asarray(beats, dtype=np.int64).tolist():
        out[b: b + 2 * half + 1] += wave
    return amplitude * out[half: half + n_samples]


def constant_rate_ecg(rr_ms, duration_s, rate=1000.0, first_ms=None, noise=0.0, rng=None):
    """ECG with beats exactly ``rr_ms`` apart; returns ``(samples, beat_indices)``."""
    n = int(round(duration_s * rate))
    step = rr_ms * rate / 1000.0
    first = step / 2 if first_ms is None else first_ms * rate / 1000.0
    beats = np.rint(np.arange(first, n, step)).astype(np.int64)
    x = render_ecg(beats, n, rate)
    if noise:
        rng = rng if rng is not None else np.random.default_rng(0)
        x = x + rng.standard_normal(n) * noise
    return x, beats


def add_noise_snr(x, snr_db, rng):
    power = np.mean(x ** 2)
    sigma = np.sqrt(power / 10 ** (snr_db / 10))
    return x + rng.standard_normal(x.shape[0]) * sigma


def heart_rate_bpm(arousal, spec):
    return spec.hr_base_bpm + spec.hr_gain_bpm * arousal


def beats_from_arousal(arousal_fine, rate, spec, rng):
    """Integrate instantaneous RR (from arousal at each sample) into beat indices."""
    n = arousal_fine.shape[0]
    rr = 60.0 * rate / heart_rate_bpm(arousal_fine, spec)   # samples per beat
    pos = rng.uniform(0.2, 0.8) * rr[0]
    beats = []
    while pos < n:
        k = int(round(pos))
        beats.append(k)
        pos += rr[min(k, n - 1)]
    return np.asarray(beats, dtype=np.int64)


def _subject_signals(latents, spec, rng):
    rate = spec.ecg_rate
    steps = latents.shape[0]
    n = int(round(steps * GRID_DT * rate))
    grid_idx = np.arange(steps) * (GRID_DT * rate)
    arousal = latents[:, 0]
    arousal_fine = np.interp(np.arange(n), grid_idx, arousal)
    beats = beats_from_arousal(arousal_fine, rate, spec, rng)
    amp = rng.uniform(0.8, 1.2)
    ecg = render_ecg(beats, n, rate, amp)
    if spec.ecg_noise:
        ecg = ecg + rng.standard_normal(n) * spec.ecg_noise * amp

    half_block = int(round(GRID_DT * rate / 2))
    csum = np.concatenate([[0.0], np.cumsum(ecg)])
    centres = np.rint(grid_idx).astype(np.int64)
    lo = np.clip(centres - half_block, 0, n)
    hi = np.clip(centres + half_block, 0, n)
    ecg_2hz = (csum[hi] - csum[lo]) / np.maximum(hi - lo, 1)
    bpm = heart_rate_bpm(arousal, spec) + rng.standard_normal(steps) * 0.5
    resp = 15.0 + 3.0 * arousal + 1.0 * latents[:, 1] + rng.standard_normal(steps) * 0.3

    return SubjectSignals(
        ecg=RawSignal(ecg, rate, 0.0),
        resp=RawSignal(resp, 2.0, 0.0),
        bpm=RawSignal(bpm, 2.0, 0.0),
        ecg_2hz=RawSignal(ecg_2hz, 2.0, 0.0),
        beats=beats,
    )


def generate_synthetic_corpus(spec=None, seed=0):
    spec = (spec or SynthSpec()).validate()
    root = np.random.SeedSequence([int(seed), 0x5EED])
    map_seq, *subject_seqs = root.spawn(1 + spec.n_subjects)
    map_rng = np.random.Generator(np.random.PCG64(map_seq))
    maps = {name: map_rng.standard_normal((2, int(dim))) for name, dim in spec.modality_dims}

    steps = spec.steps
    timestamps = np.arange(steps, dtype=np.int64) * STEP_MS
    samples, signals = [], {}
    for idx, (role, sseq) in enumerate(zip(spec.roles(), subject_seqs)):
        sid = f"s{idx:03d}"
        rng = np.random.Generator(np.random.PCG64(sseq))
        latents = np.column_stack([smooth_latent(rng, steps) for _ in DIMENSIONS])
        # a latent-space shift seen through every modality's map, plus an
        # isotropic part; the former is indistinguishable from true affect
        shift = rng.standard_normal(len(DIMENSIONS)) * spec.offset
        mods = []
        for name, dim in spec.modality_dims:
            offset = shift @ maps[name] + rng.standard_normal(int(dim)) * spec.offset
            noise = rng.standard_normal((steps, int(dim))) * spec.noise
            mods.append(FeatureSequence(sid, name, timestamps, latents @ maps[name] + offset + noise))
        if spec.with_ecg:
            sig = _subject_signals(latents, spec, rng)
            signals[sid] = sig
            if spec.with_phys:
                mods.append(extract_phys_sequence(sig.ecg, sig.resp, sig.bpm, sig.ecg_2hz, subject_id=sid))
        labels = {d: LabelSequence(sid, d, timestamps, latents[:, k]) for k, d in enumerate(DIMENSIONS)}
        samples.append(AlignedSample(sid, tuple(mods), labels, role))
    return SyntheticCorpus(spec, int(seed), samples, signals, maps)


def write_corpus(corpus, out_dir):
    """Write features, labels, raw signals and ``manifest.txt`` under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in corpus.samples:
        for m in s.modalities:
            rel = Path("features") / m.modality_name / f"{s.subject_id}.csv"
            write_feature_csv(m, out / rel)
            entries.append(ManifestEntry(s.subject_id, s.role, "feature", m.modality_name, rel))
        for dim, lab in s.labels.items():
            rel = Path("labels") / dim / f"{s.subject_id}.csv"
            write_label_csv(lab, out / rel)
            entries.append(ManifestEntry(s.subject_id, s.role, "label", dim, rel))
        sig = corpus.signals.get(s.subject_id)
        if sig is not None:
            for name in ("ecg", "resp", "bpm", "ecg_2hz"):
                raw = getattr(sig, name)
                rel = Path("raw") / name / f"{s.subject_id}.csv"
                write_series_csv(np.rint(raw.times_ms()).astype(np.int64), raw.samples, out / rel)
                entries.append(ManifestEntry(s.subject_id, s.role, "raw", name, rel))
    manifest = Manifest(out, entries)
    manifest.save(out / "manifest.txt")
    return manifest
