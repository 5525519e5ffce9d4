"""Simplified Pan-Tompkins R-peak detector.

Band-pass (5-15 Hz, zero phase) -> five-point derivative -> squaring ->
150 ms moving-window integration -> adaptive threshold at half the running
signal-peak estimate with a 250 ms refractory period. Each accepted energy
peak is then refined to the band-passed maximum within +/-75 ms.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import butter, sosfiltfilt

from ..errors import SignalTooShort
from . import _kernels

MIN_SAMPLES_SECONDS = 2.0
REFRACTORY_S = 0.250
INTEGRATION_S = 0.150
REFINE_S = 0.075
BAND_HZ = (5.0, 15.0)


@dataclass(frozen=True, eq=False)
class RawSignal:
    samples: np.ndarray
    rate: float
    start_time: float = 0.0  # ms

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.float64, copy=True)
        s.setflags(write=False)
        if s.ndim != 1 or s.size < 2:
            raise SignalTooShort("raw signal needs at least 2 samples")
        if not self.rate > 0:
            raise ValueError("sampling rate must be positive")
        if not np.all(np.isfinite(s)):
            raise ValueError("raw signal contains non-finite samples")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.shape[0]

    def times_ms(self):
        return self.start_time + np.arange(len(self)) * (1000.0 / self.rate)


@lru_cache(maxsize=8)
def _bandpass(rate):
    return butter(2, BAND_HZ, btype="bandpass", fs=rate, output="sos")


def _samples(seconds, rate):
    return max(1, int(round(seconds * rate)))


def qrs_energy(x, rate):
    """Band-passed signal and its integrated squared derivative."""
    filtered = sosfiltfilt(_bandpass(float(rate)), x)
    deriv = np.correlate(filtered, np.array([-2.0, -1.0, 0.0, 1.0, 2.0]) / 8.0, mode="same")
    win = _samples(INTEGRATION_S, rate)
    mwi = np.convolve(deriv * deriv, np.full(win, 1.0 / win), mode="same")
    return filtered, mwi


def detect_r_peaks(ecg, rate=None):
    """Return strictly increasing R-peak sample indices.

    ``ecg`` is a :class:`RawSignal` or a 1-D array (then ``rate`` is needed).
    """
    if isinstance(ecg, RawSignal):
        x, rate = ecg.samples, ecg.rate
    else:
        x = np.asarray(ecg, dtype=np.float64)
        if rate is None:
            raise TypeError("rate is required for array input")
    n = x.shape[0]
    if n < MIN_SAMPLES_SECONDS * rate:
        raise SignalTooShort(f"need at least {MIN_SAMPLES_SECONDS:g} s of ECG, got {n} samples")
    if np.ptp(x) == 0:
        return np.empty(0, dtype=np.int64)

    filtered, mwi = qrs_energy(x, rate)
    spk = float(mwi[: _samples(MIN_SAMPLES_SECONDS, rate)].max())
    if spk <= 0:
        return np.empty(0, dtype=np.int64)
    refractory = _samples(REFRACTORY_S, rate)
    coarse = _kernels.threshold_scan(mwi, spk, refractory)

    half = _samples(REFINE_S, rate)
    refined = []
    for i in coarse.tolist():
        lo, hi = max(0, i - half), min(n, i + half + 1)
        j = lo + int(np.argmax(filtered[lo:hi]))
        if refined and j - refined[-1] < refractory:
            if filtered[j] > filtered[refined[-1]]:
                refined[-1] = j
            continue
        refined.append(j)
    return np.asarray(refined, dtype=np.int64)


def nn_intervals_ms(peaks, rate):
    return np.diff(np.asarray(peaks, dtype=np.float64)) * (1000.0 / rate)
