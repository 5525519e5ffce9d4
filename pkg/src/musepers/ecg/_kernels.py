"""Adaptive-threshold scan over the integrated QRS energy signal."""
import numpy as np

from .._accel import njit, pick

# fraction of the running signal-peak estimate a candidate must exceed
THRESHOLD_FRACTION = 0.5
# running estimate update weight for each accepted peak
SPK_WEIGHT = 0.125


def _scan_py(mwi, spk, refractory):
    n = mwi.shape[0]
    peaks = np.empty(n, dtype=np.int64)
    count = 0
    for i in range(1, n - 1):
        v = mwi[i]
        if not (v > mwi[i - 1] and v >= mwi[i + 1]):
            continue
        if v <= THRESHOLD_FRACTION * spk:
            continue
        if count > 0 and i - peaks[count - 1] < refractory:
            # inside the refractory period keep the stronger candidate
            if v > mwi[peaks[count - 1]]:
                peaks[count - 1] = i
                spk = SPK_WEIGHT * v + (1.0 - SPK_WEIGHT) * spk
            continue
        peaks[count] = i
        count += 1
        spk = SPK_WEIGHT * v + (1.0 - SPK_WEIGHT) * spk
    return peaks[:count]


scan_numba = njit(_scan_py)


def scan_numpy(mwi, spk, refractory):
    """Same decisions as the compiled loop; candidates are found vectorised."""
    inner = mwi[1:-1]
    cand = np.flatnonzero((inner > mwi[:-2]) & (inner >= mwi[2:])) + 1
    out = []
    for i in cand.tolist():
        v = mwi[i]
        if v <= THRESHOLD_FRACTION * spk:
            continue
        if out and i - out[-1] < refractory:
            if v > mwi[out[-1]]:
                out[-1] = i
                spk = SPK_WEIGHT * v + (1.0 - SPK_WEIGHT) * spk
            continue
        out.append(i)
        spk = SPK_WEIGHT * v + (1.0 - SPK_WEIGHT) * spk
    return np.asarray(out, dtype=np.int64)


threshold_scan = pick(scan_numba, scan_numpy)
