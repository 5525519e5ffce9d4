from .hrv import HRV_NAMES, HrvVector, hrv_time_features
from .peaks import RawSignal, detect_r_peaks, nn_intervals_ms
from .phys import PHYS_COLUMNS, extract_phys_sequence

__all__ = [
    "HRV_NAMES",
    "HrvVector",
    "PHYS_COLUMNS",
    "RawSignal",
    "detect_r_peaks",
    "extract_phys_sequence",
    "hrv_time_features",
    "nn_intervals_ms",
]
