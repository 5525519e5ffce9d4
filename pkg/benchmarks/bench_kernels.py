"""Numba vs numpy timings for the hot kernels.

Kernel rows call both implementations directly in one process. The
``train step`` rows run a full forward/backward/Adam step in a subprocess,
once with ``MUSEPERS_DISABLE_NUMBA=1`` and once without, so the env switch
itself is exercised.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from musepers.ecg import _kernels as ecg_k
from musepers.ecg.peaks import qrs_energy
from musepers.nn import _kernels as nn_k
from musepers.synth import constant_rate_ecg


def best_of(fn, repeat):
    fn()  # warm-up (and numba compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def gru_inputs(T, B, d, rng):
    P = rng.standard_normal((T, B, 3 * d)) * 0.5
    U = rng.standard_normal((d, 3 * d)) / np.sqrt(d)
    bn = rng.standard_normal(d) * 0.1
    return P, U, bn


def bench_gru(T, B, d, repeat):
    rng = np.random.default_rng(0)
    P, U, bn = gru_inputs(T, B, d, rng)
    out = {}
    for name, fwd, bwd in (("numba", nn_k.forward_scan_numba, nn_k.backward_scan_numba),
                           ("numpy", nn_k.forward_scan_numpy, nn_k.backward_scan_numpy)):
        H, G = fwd(P, U, bn)
        dH = rng.standard_normal(H[1:].shape)
        UT = np.ascontiguousarray(U.T)
        out[name] = (best_of(lambda: fwd(P, U, bn), repeat),
                     best_of(lambda: bwd(dH, H, G, UT), repeat))
    return out


def bench_peaks(seconds, repeat):
    x, _ = constant_rate_ecg(800.0, seconds, 1000.0, noise=0.02)
    _, mwi = qrs_energy(x, 1000.0)
    spk = float(mwi[:2000].max())
    refractory = 250
    return {
        "numba": best_of(lambda: ecg_k.scan_numba(mwi, spk, refractory), repeat),
        "numpy": best_of(lambda: ecg_k.scan_numpy(mwi, spk, refractory), repeat),
    }


STEP_SCRIPT = r"""
import json, sys, time
import numpy as np
from musepers._accel import backend_name
from musepers.nn import AdamState, ModelConfig, adam_step, backward, forward, init_model
T, B, d, repeat = map(int, sys.argv[1:5])
cfg = ModelConfig(input_dims=(32, 24), fused_dim=d)
model = init_model(cfg)
state = AdamState.fresh(model, lr=1e-3)
X = np.random.default_rng(0).standard_normal((B, T, 56))
def step():
    pred, cache = forward(model, X)
    grads = backward(model, cache, np.ones_like(pred) / pred.size)
    adam_step(model, grads, state)
step()
times = []
for _ in range(repeat):
    t0 = time.perf_counter(); step(); times.append(time.perf_counter() - t0)
print(json.dumps({"backend": backend_name(), "seconds": min(times)}))
"""


def bench_step(T, B, d, repeat):
    out = {}
    for disable in ("0", "1"):
        env = dict(os.environ, MUSEPERS_DISABLE_NUMBA=disable)
        res = subprocess.run([sys.executable, "-c", STEP_SCRIPT, str(T), str(B), str(d), str(repeat)],
                             env=env, capture_output=True, text=True, check=True)
        row = json.loads(res.stdout.strip().splitlines()[-1])
        out[row["backend"]] = row["seconds"]
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n", 1)[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="small sizes only")
    args = ap.parse_args()

    gru_cases = [(10, 128, 256), (200, 128, 256), (600, 1, 256), (600, 1, 32), (10, 8, 32)]
    if args.quick:
        gru_cases = [(10, 32, 64), (100, 8, 64)]
    print(f"{'case':<34}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")

    def row(label, a, b):
        print(f"{label:<34}{a * 1e3:>12.3f}{b * 1e3:>12.3f}{b / a:>9.1f}x")

    for T, B, d in gru_cases:
        r = bench_gru(T, B, d, args.repeat)
        row(f"gru fwd  T={T} B={B} d={d}", r["numba"][0], r["numpy"][0])
        row(f"gru bwd  T={T} B={B} d={d}", r["numba"][1], r["numpy"][1])
    for seconds in ((10,) if args.quick else (60, 300)):
        r = bench_peaks(seconds, args.repeat)
        row(f"peak scan {seconds} s @ 1 kHz", r["numba"], r["numpy"])
    step_cases = [(10, 32, 64)] if args.quick else [(10, 128, 256), (200, 16, 256), (600, 1, 32)]
    for T, B, d in step_cases:
        r = bench_step(T, B, d, args.repeat)
        row(f"train step T={T} B={B} d={d}", r["numba"], r["numpy"])


if __name__ == "__main__":
    main()
