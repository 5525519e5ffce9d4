"""Eighteen time-domain HRV statistics of an NN-interval series (ms)."""
from typing import NamedTuple

import numpy as np

from ..errors import NonPositiveInterval, TooFewIntervals

MAD_SCALE = 1.4826
# 1/128 s, the conventional histogram bin for the triangular index
HTI_BIN_MS = 7.8125


class HrvVector(NamedTuple):
    MeanNN: float
    SDNN: float
    RMSSD: float
    SDSD: float
    CVNN: float
    CVSD: float
    MedianNN: float
    MadNN: float
    MCVNN: float
    IQRNN: float
    Prc20NN: float
    Prc80NN: float
    pNN50: float
    pNN20: float
    MinNN: float
    MaxNN: float
    RangeNN: float
    HTI: float

    def as_array(self):
        return np.array(self, dtype=np.float64)


HRV_NAMES = HrvVector._fields


def hrv_time_features(nn_intervals):
    nn = np.asarray(nn_intervals, dtype=np.float64).ravel()
    if nn.size < 2:
        raise TooFewIntervals(f"need at least 2 NN intervals, got {nn.size}")
    if not np.all(np.isfinite(nn)) or np.any(nn <= 0):
        raise NonPositiveInterval("NN intervals must be finite and positive")

    mean = nn.mean()
    sdnn = nn.std(ddof=1)
    diff = np.diff(nn)
    rmssd = np.sqrt(np.mean(diff ** 2))
    sdsd = diff.std(ddof=1) if diff.size > 1 else 0.0
    median = np.median(nn)
    mad = MAD_SCALE * np.median(np.abs(nn - median))
    p20, p25, p75, p80 = np.percentile(nn, [20, 25, 75, 80])
    absdiff = np.abs(diff)
    lo, hi = nn.min(), nn.max()

    bins = np.floor(nn / HTI_BIN_MS).astype(np.int64)
    _, counts = np.unique(bins, return_counts=True)

    return HrvVector(
        MeanNN=float(mean),
        SDNN=float(sdnn),
        RMSSD=float(rmssd),
        SDSD=float(sdsd),
        CVNN=float(sdnn / mean),
        CVSD=float(rmssd / mean),
        MedianNN=float(median),
        MadNN=float(mad),
        MCVNN=float(mad / median),
        IQRNN=float(p75 - p25),
        Prc20NN=float(p20),
        Prc80NN=float(p80),
        pNN50=float(100.0 * np.count_nonzero(absdiff > 50.0) / diff.size),
        pNN20=float(100.0 * np.count_nonzero(absdiff > 20.0) / diff.size),
        MinNN=float(lo),
        MaxNN=float(hi),
        RangeNN=float(hi - lo),
        HTI=float(nn.size / counts.max()),
    )
