"""GRU time-recurrence kernels (time-major, batched).

Shapes: ``P`` (T, B, 3d) holds the input projections ``[x W_r + b_r,
x W_z + b_z, x W_n]``; ``U`` (d, 3d) is ``[U_r | U_z | U_n]``. The forward scan
returns hidden states ``H`` (T+1, B, d) with ``H[0] = 0`` and a gate cache
``G`` (T, B, 4d) = ``[r, z, n, U_n h + b_n]``. The backward scan returns the
gradients of the pre-activations: ``dP`` for the input projections and
``dRec`` for the recurrent products ``h U``.
"""
import math

import numpy as np
from scipy.special import expit

from .._accel import njit, pick


@njit
def _sigmoid(x):
    # exp overflow gives inf and a clean 0.0; branch-free so the loop vectorises
    return 1.0 / (1.0 + math.exp(-x))


def _forward_loops(P, U, bn):
    T, B, d3 = P.shape
    d = d3 // 3
    H = np.zeros((T + 1, B, d))
    G = np.empty((T, B, 4 * d))
    for t in range(T):
        rec = np.dot(H[t], U)
        for b in range(B):
            for j in range(d):
                r = _sigmoid(P[t, b, j] + rec[b, j])
                z = _sigmoid(P[t, b, d + j] + rec[b, d + j])
                hn = rec[b, 2 * d + j] + bn[j]
                n = math.tanh(P[t, b, 2 * d + j] + r * hn)
                H[t + 1, b, j] = (1.0 - z) * n + z * H[t, b, j]
                G[t, b, j] = r
                G[t, b, d + j] = z
                G[t, b, 2 * d + j] = n
                G[t, b, 3 * d + j] = hn
    return H, G


def _backward_loops(dH, H, G, UT):
    T, B, d = dH.shape
    dP = np.empty((T, B, 3 * d))
    dRec = np.empty((T, B, 3 * d))
    carry = np.zeros((B, d))
    for t in range(T - 1, -1, -1):
        for b in range(B):
            for j in range(d):
                dh = dH[t, b, j] + carry[b, j]
                r = G[t, b, j]
                z = G[t, b, d + j]
                n = G[t, b, 2 * d + j]
                hn = G[t, b, 3 * d + j]
                dn_pre = dh * (1.0 - z) * (1.0 - n * n)
                dz_pre = dh * (H[t, b, j] - n) * z * (1.0 - z)
                dr_pre = dn_pre * hn * r * (1.0 - r)
                dP[t, b, j] = dr_pre
                dP[t, b, d + j] = dz_pre
                dP[t, b, 2 * d + j] = dn_pre
                dRec[t, b, j] = dr_pre
                dRec[t, b, d + j] = dz_pre
                dRec[t, b, 2 * d + j] = dn_pre * r
                carry[b, j] = dh * z
        carry += np.dot(dRec[t], UT)
    return dP, dRec


forward_scan_numba = njit(_forward_loops)
backward_scan_numba = njit(_backward_loops)


def forward_scan_numpy(P, U, bn):
    T, B, d3 = P.shape
    d = d3 // 3
    H = np.zeros((T + 1, B, d))
    G = np.empty((T, B, 4 * d))
    for t in range(T):
        rec = H[t] @ U
        r = expit(P[t, :, :d] + rec[:, :d])
        z = expit(P[t, :, d:2 * d] + rec[:, d:2 * d])
        hn = rec[:, 2 * d:] + bn
        n = np.tanh(P[t, :, 2 * d:] + r * hn)
        H[t + 1] = (1.0 - z) * n + z * H[t]
        G[t, :, :d] = r
        G[t, :, d:2 * d] = z
        G[t, :, 2 * d:3 * d] = n
        G[t, :, 3 * d:] = hn
    return H, G


def backward_scan_numpy(dH, H, G, UT):
    T, B, d = dH.shape
    dP = np.empty((T, B, 3 * d))
    dRec = np.empty((T, B, 3 * d))
    carry = np.zeros((B, d))
    for t in range(T - 1, -1, -1):
        dh = dH[t] + carry
        r, z, n, hn = G[t, :, :d], G[t, :, d:2 * d], G[t, :, 2 * d:3 * d], G[t, :, 3 * d:]
        dn_pre = dh * (1.0 - z) * (1.0 - n * n)
        dz_pre = dh * (H[t] - n) * z * (1.0 - z)
        dr_pre = dn_pre * hn * r * (1.0 - r)
        dP[t, :, :d] = dr_pre
        dP[t, :, d:2 * d] = dz_pre
        dP[t, :, 2 * d:] = dn_pre
        dRec[t, :, :d] = dr_pre
        dRec[t, :, d:2 * d] = dz_pre
        dRec[t, :, 2 * d:] = dn_pre * r
        carry = dh * z + dRec[t] @ UT
    return dP, dRec


forward_scan = pick(forward_scan_numba, forward_scan_numpy)
backward_scan = pick(backward_scan_numba, backward_scan_numpy)
