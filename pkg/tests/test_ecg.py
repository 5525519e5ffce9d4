import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from musepers.ecg import (
    HRV_NAMES,
    PHYS_COLUMNS,
    RawSignal,
    detect_r_peaks,
    extract_phys_sequence,
    hrv_time_features,
    nn_intervals_ms,
)
from musepers.ecg.peaks import REFRACTORY_S
from musepers.errors import (
    CoverageError,
    GridMismatch,
    NonPositiveInterval,
    SignalTooShort,
    TooFewIntervals,
)
from musepers.synth import add_noise_snr, constant_rate_ecg
from oracles import hrv_oracle


def match(detected, truth, tol):
    """Greedy one-to-one matching within ``tol`` samples -> (recall, precision)."""
    detected = list(detected)
    used = set()
    hits = 0
    for t in truth:
        best = None
        for k, d in enumerate(detected):
            if k not in used and abs(d - t) <= tol and (best is None or abs(d - t) < abs(detected[best] - t)):
                best = k
        if best is not None:
            used.add(best)
            hits += 1
    return hits / max(len(truth), 1), hits / max(len(detected), 1)


# --- HRV --------------------------------------------------------------------

def test_constant_intervals():
    v = hrv_time_features([800, 800, 800])
    assert v.MeanNN == 800 and v.SDNN == 0 and v.RMSSD == 0
    assert v.pNN50 == 0 and v.RangeNN == 0 and v.HTI == 1.0


def test_worked_example_against_oracle():
    v = hrv_time_features([800, 820, 780])._asdict()
    o = hrv_oracle([800, 820, 780])
    assert o["SDNN"] == pytest.approx(20.0)
    assert o["RMSSD"] == pytest.approx(np.sqrt((20 ** 2 + 40 ** 2) / 2))
    assert o["SDSD"] == pytest.approx(42.42640687, rel=1e-9)
    assert o["pNN50"] == 0.0 and o["pNN20"] == 50.0
    for k in HRV_NAMES:
        assert v[k] == pytest.approx(o[k], rel=1e-12, abs=1e-12), k


def test_matches_oracle_on_random_lists(rng):
    for _ in range(300):
        n = int(rng.integers(2, 60))
        nn = rng.uniform(350, 1500, n)
        if rng.random() < 0.3:
            nn = np.round(nn)
        v = hrv_time_features(nn)._asdict()
        o = hrv_oracle(nn)
        for k in HRV_NAMES:
            assert v[k] == pytest.approx(o[k], rel=1e-9, abs=1e-9), k


def test_two_intervals_sdsd_is_zero():
    assert hrv_time_features([800, 900]).SDSD == 0.0


def test_hrv_errors():
    with pytest.raises(TooFewIntervals):
        hrv_time_features([800])
    with pytest.raises(NonPositiveInterval):
        hrv_time_features([800, 0, 900])
    with pytest.raises(NonPositiveInterval):
        hrv_time_features([800, np.nan, 900])


@given(st.lists(st.floats(300, 2000), min_size=2, max_size=30), st.randoms(use_true_random=False))
def test_hrv_invariants(nn, rnd):
    v = hrv_time_features(nn)
    assert all(np.isfinite(v.as_array()))
    assert v.MinNN <= v.MedianNN <= v.MaxNN
    assert v.RangeNN == v.MaxNN - v.MinNN
    assert v.SDNN >= 0 and 0 <= v.pNN50 <= 100 and 0 <= v.pNN20 <= 100
    assert v.HTI >= 1
    shuffled = list(nn)
    rnd.shuffle(shuffled)
    w = hrv_time_features(shuffled)
    for k in ("MeanNN", "SDNN", "MedianNN", "MinNN", "MaxNN", "Prc20NN", "Prc80NN", "IQRNN"):
        assert getattr(w, k) == pytest.approx(getattr(v, k), rel=1e-12, abs=1e-9)


def test_hti_is_one_only_for_a_single_bin():
    assert hrv_time_features([800.0, 801.0, 802.0]).HTI == 1.0
    assert hrv_time_features([800.0, 900.0]).HTI == 2.0


# --- R peaks ----------------------------------------------------------------

def test_clean_ecg_800ms_spacing():
    x, beats = constant_rate_ecg(800.0, 30.0)
    peaks = detect_r_peaks(x, 1000.0)
    interior = np.diff(peaks)[1:-1]
    assert np.all(np.abs(interior - 800) <= 10)
    rec, prec = match(peaks, beats[1:-1], 50)
    assert rec == 1.0


def test_flat_signal_has_no_peaks():
    assert detect_r_peaks(np.zeros(5000), 1000.0).size == 0


def test_short_signal():
    with pytest.raises(SignalTooShort):
        detect_r_peaks(np.zeros(1999), 1000.0)
    with pytest.raises(TypeError):
        detect_r_peaks(np.zeros(3000))


def test_noisy_ecg_recall_precision():
    rng = np.random.default_rng(7)
    x, beats = constant_rate_ecg(700.0, 60.0)
    noisy = add_noise_snr(x, 10.0, rng)
    peaks = detect_r_peaks(RawSignal(noisy, 1000.0))
    rec, prec = match(peaks, beats, 50)
    assert rec >= 0.95 and prec >= 0.95


def test_refractory_respected():
    x, _ = constant_rate_ecg(300.0, 20.0, noise=0.05)
    peaks = detect_r_peaks(x, 1000.0)
    assert np.all(np.diff(peaks) >= REFRACTORY_S * 1000)


def test_translation_equivariance():
    x, _ = constant_rate_ecg(820.0, 20.0, noise=0.01, rng=np.random.default_rng(1))
    k = 137
    shifted = np.concatenate([np.full(k, x[0]), x])
    a = detect_r_peaks(x, 1000.0)
    b = detect_r_peaks(shifted, 1000.0)
    ia = {int(p) for p in a if 3000 < p < len(x) - 3000}
    ib = {int(p) - k for p in b if 3000 < p - k < len(x) - 3000}
    assert ia == ib and ia


def test_nn_intervals():
    assert np.array_equal(nn_intervals_ms([0, 500, 1300], 500.0), [1000.0, 1600.0])


# --- Phys -------------------------------------------------------------------

def _grid_signals(T, start=0.0):
    rng = np.random.default_rng(0)
    return (RawSignal(rng.standard_normal(T), 2.0, start),
            RawSignal(70 + rng.standard_normal(T), 2.0, start),
            RawSignal(rng.standard_normal(T), 2.0, start))


def test_phys_sequence_shape_and_passthrough():
    x, beats = constant_rate_ecg(750.0, 60.0)
    resp, bpm, e2 = _grid_signals(120)
    seq = extract_phys_sequence(RawSignal(x, 1000.0), resp, bpm, e2, subject_id="s1")
    assert seq.values.shape == (120, 21) and seq.dim == len(PHYS_COLUMNS)
    assert np.array_equal(seq.values[:, 0], e2.samples)
    assert np.array_equal(seq.values[:, 1], resp.samples)
    assert np.array_equal(seq.values[:, 2], bpm.samples)
    mean_nn = seq.values[4:-4, 3]
    assert np.all(np.abs(mean_nn - 750.0) <= 10.0)
    assert np.all(np.isfinite(seq.values))


def test_phys_carry_forward_and_zero_start():
    # silent first 8 s and a silent gap from 15 s to 25 s
    x, _ = constant_rate_ecg(800.0, 30.0)
    x[:8000] = 0.0
    x[15000:25000] = 0.0
    resp, bpm, e2 = _grid_signals(60)
    seq = extract_phys_sequence(RawSignal(x, 1000.0), resp, bpm, e2)
    hrv = seq.values[:, 3:]
    # windows centred at 0..5.5 s see at most one beat pair gap -> zeros
    assert np.all(hrv[:12] == 0.0)
    # windows centred at 17.5..22.5 s are fully silent -> carried forward
    for k in range(36, 46):
        assert np.array_equal(hrv[k], hrv[35])
    assert np.any(hrv[35] != 0.0)
    assert np.all(np.isfinite(seq.values))


def test_phys_errors():
    x, _ = constant_rate_ecg(800.0, 10.0)
    resp, bpm, e2 = _grid_signals(20)
    with pytest.raises(GridMismatch):
        extract_phys_sequence(RawSignal(x, 1000.0), resp, RawSignal(bpm.samples, 4.0), e2)
    with pytest.raises(GridMismatch):
        extract_phys_sequence(RawSignal(x, 1000.0), resp, RawSignal(bpm.samples[:-1], 2.0), e2)
    resp, bpm, e2 = _grid_signals(40)
    with pytest.raises(CoverageError):
        extract_phys_sequence(RawSignal(x, 1000.0), resp, bpm, e2)
