"""21-d physiological feature sequence on the 2 Hz grid.

Row layout: ``[ecg_2hz, resp, bpm, <18 HRV features>]``. HRV features come
from a 4 s raw-ECG window centred on each grid point; the raw signal is
edge-padded by half a window so the first and last centres are valid.

Peaks are detected on the window plus a short context margin on each side
and only those inside the window are kept. Without the margin a beat cut in
half by the window edge leaves a partial QRS that the detector reports as a
spurious peak about 90 ms later.
"""
import numpy as np

from ..errors import CoverageError, GridMismatch, SignalTooShort
from ..seqdata import STEP_MS, FeatureSequence
from .hrv import HRV_NAMES, hrv_time_features
from .peaks import RawSignal, detect_r_peaks, nn_intervals_ms

WINDOW_S = 4.0
CONTEXT_S = 0.5
GRID_RATE = 2.0
PHYS_COLUMNS = ("ecg_2hz", "resp", "bpm") + HRV_NAMES


def _grid(resp, bpm, ecg_2hz):
    ref = ecg_2hz
    for name, sig in (("resp", resp), ("bpm", bpm), ("ecg_2hz", ecg_2hz)):
        if sig.rate != GRID_RATE:
            raise GridMismatch(f"{name} must be sampled at {GRID_RATE:g} Hz, got {sig.rate:g}")
        if len(sig) != len(ref) or sig.start_time != ref.start_time:
            raise GridMismatch(f"{name} is not on the same 2 Hz grid as ecg_2hz")
    start = float(ref.start_time)
    if not start.is_integer():
        raise GridMismatch("2 Hz grid must start on an integer millisecond")
    return int(start) + STEP_MS * np.arange(len(ref), dtype=np.int64)


def window_hrv(window, rate, margin=0):
    """HRV vector of one window, or ``None`` with fewer than 2 intervals.

    ``window`` carries ``margin`` extra samples of context on each side.
    """
    try:
        peaks = detect_r_peaks(window, rate)
    except SignalTooShort:
        return None
    if margin:
        peaks = peaks[(peaks >= margin) & (peaks < window.shape[0] - margin)]
    nn = nn_intervals_ms(peaks, rate)
    if nn.size < 2:
        return None
    return hrv_time_features(nn).as_array()


def extract_phys_sequence(raw_ecg, resp, bpm, ecg_2hz, subject_id="subject", modality_name="phys"):
    grid = _grid(resp, bpm, ecg_2hz)
    rate = raw_ecg.rate
    pos = (grid - raw_ecg.start_time) * (rate / 1000.0)
    centres = np.rint(pos).astype(np.int64)
    if not np.allclose(pos, centres):
        raise GridMismatch("grid points do not fall on raw ECG samples")
    n = len(raw_ecg)
    if centres[0] < 0 or centres[-1] > n - 1:
        raise CoverageError(
            f"raw ECG covers samples 0..{n - 1} but the grid needs {centres[0]}..{centres[-1]}"
        )
    half = int(round(WINDOW_S * rate / 2))
    margin = int(round(CONTEXT_S * rate))
    padded = np.pad(raw_ecg.samples, half + margin, mode="edge")

    hrv = np.empty((grid.size, len(HRV_NAMES)))
    prev = np.zeros(len(HRV_NAMES))
    for k, c in enumerate(centres.tolist()):
        # padded[c : c + 2*(half+margin)] is [c - half - margin, c + half + margin)
        vec = window_hrv(padded[c: c + 2 * (half + margin)], rate, margin)
        if vec is not None:
            prev = vec
        hrv[k] = prev
    values = np.column_stack([ecg_2hz.samples, resp.samples, bpm.samples, hrv])
    return FeatureSequence(subject_id, modality_name, grid, values)
