"""Independent reference implementations used as test oracles.

Everything here is written from the textbook formulas with plain Python
loops, ``math.fsum`` and ``fractions.Fraction`` so that it shares no code path
with the package under test.
"""
import math
from fractions import Fraction

import numpy as np


# --- CCC --------------------------------------------------------------------

def ccc_exact(x, y):
    """CCC in exact rational arithmetic (population statistics)."""
    x = [Fraction(v) for v in x]
    y = [Fraction(v) for v in y]
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    vx = sum((a - mx) ** 2 for a in x) / n
    vy = sum((b - my) ** 2 for b in y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    return 2 * cov / (vx + vy + (mx - my) ** 2)


def ccc_float(x, y):
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    vx = math.fsum((a - mx) ** 2 for a in x) / n
    vy = math.fsum((b - my) ** 2 for b in y) / n
    cov = math.fsum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    return 2 * cov / (vx + vy + (mx - my) ** 2)


# --- HRV --------------------------------------------------------------------

def _percentile(sorted_vals, q):
    # linear interpolation between closest ranks (rank = q/100 * (n-1))
    n = len(sorted_vals)
    pos = q / 100.0 * (n - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return sorted_vals[lo] + (sorted_vals[hi] - sorted_vals[lo]) * frac


def _median(vals):
    s = sorted(vals)
    n = len(s)
    mid = n // 2
    return s[mid] if n % 2 else (s[mid - 1] + s[mid]) / 2.0


def _sample_std(vals):
    n = len(vals)
    if n < 2:
        return 0.0
    m = math.fsum(vals) / n
    return math.sqrt(math.fsum((v - m) ** 2 for v in vals) / (n - 1))


def hrv_oracle(nn):
    nn = [float(v) for v in nn]
    n = len(nn)
    mean = math.fsum(nn) / n
    sdnn = _sample_std(nn)
    diffs = [nn[i + 1] - nn[i] for i in range(n - 1)]
    rmssd = math.sqrt(math.fsum(d * d for d in diffs) / len(diffs))
    sdsd = _sample_std(diffs)
    med = _median(nn)
    mad = 1.4826 * _median([abs(v - med) for v in nn])
    s = sorted(nn)
    counts = {}
    for v in nn:
        k = math.floor(v / 7.8125)
        counts[k] = counts.get(k, 0) + 1
    return {
        "MeanNN": mean,
        "SDNN": sdnn,
        "RMSSD": rmssd,
        "SDSD": sdsd,
        "CVNN": sdnn / mean,
        "CVSD": rmssd / mean,
        "MedianNN": med,
        "MadNN": mad,
        "MCVNN": mad / med,
        "IQRNN": _percentile(s, 75) - _percentile(s, 25),
        "Prc20NN": _percentile(s, 20),
        "Prc80NN": _percentile(s, 80),
        "pNN50": 100.0 * sum(1 for d in diffs if abs(d) > 50) / len(diffs),
        "pNN20": 100.0 * sum(1 for d in diffs if abs(d) > 20) / len(diffs),
        "MinNN": s[0],
        "MaxNN": s[-1],
        "RangeNN": s[-1] - s[0],
        "HTI": n / max(counts.values()),
    }


# --- windows ----------------------------------------------------------------

def windows_oracle(T, win, hop):
    out = []
    start = 0
    while start < T:
        stop = start + win
        if stop > T:
            stop = T
        if stop - start >= 2:
            out.append((start, stop))
        start += hop
    return out


# --- GRU model --------------------------------------------------------------

def _sig(v):
    return 1.0 / (1.0 + np.exp(-v))


def _gru_seq(xs, p, pre):
    d = p[pre + "b_r"].shape[0]
    h = np.zeros(d)
    out = []
    for x in xs:
        r = _sig(x @ p[pre + "W_r"] + h @ p[pre + "U_r"] + p[pre + "b_r"])
        z = _sig(x @ p[pre + "W_z"] + h @ p[pre + "U_z"] + p[pre + "b_z"])
        n = np.tanh(x @ p[pre + "W_n"] + r * (h @ p[pre + "U_n"] + p[pre + "b_n"]))
        h = (1.0 - z) * n + z * h
        out.append(h)
    return np.array(out)


def model_forward_oracle(params, cfg, x):
    """Per-step, per-gate forward pass of one (T, N) sequence."""
    seq = np.asarray(x, dtype=np.float64) @ params["fusion.W"] + params["fusion.b"]
    for layer in range(cfg.rnn_layers):
        outs = [_gru_seq(seq, params, f"gru{layer}.fwd.")]
        if cfg.rnn_bidirectional:
            outs.append(_gru_seq(seq[::-1], params, f"gru{layer}.bwd.")[::-1])
        seq = np.concatenate(outs, axis=1)
    hidden = np.maximum(seq @ params["head.W1"] + params["head.b1"], 0.0)
    return (hidden @ params["head.W2"])[:, 0] + params["head.b2"][0]


# --- finite differences -----------------------------------------------------

def central_diff(f, x, h=1e-6):
    """Central differences of scalar ``f`` w.r.t. every entry of array ``x`` (in place)."""
    g = np.empty_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gf[i] = (up - down) / (2 * h)
    return g


def fd_floor(f_value, base=1e-4):
    """Denominator floor for comparing against central differences of ``f``.

    Central-difference roundoff is about eps * |f| / h, so entries whose true
    gradient is near zero are judged against a floor that grows with |f|.
    """
    return base * max(1.0, abs(float(f_value)))


def rel_error(a, b, floor=1e-4):
    """max |a-b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


# --- linear headroom ---------------------------------------------------------

def ridge_fit(X, y, lam=1e-3):
    Xa = np.column_stack([X, np.ones(len(X))])
    A = Xa.T @ Xa + lam * np.eye(Xa.shape[1])
    return np.linalg.solve(A, Xa.T @ y)


def ridge_predict(w, X):
    return np.column_stack([X, np.ones(len(X))]) @ w
