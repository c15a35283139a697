"""Brute-force reference computations used to check the kernels.

These deliberately avoid the code paths they check: integer products go
through Python ints or int64 broadcasting (never BLAS), e4m3 rounding is a
nearest-neighbour search over the decoded code table, and the quantized
attention oracle is untiled.
"""

from __future__ import annotations

import numpy as np


def naive_int_matmul(a, b) -> list:
    """Triple loop over Python ints: ``a`` (m x k) times ``b`` (k x n)."""
    a = [[int(x) for x in row] for row in np.asarray(a)]
    b = [[int(x) for x in row] for row in np.asarray(b)]
    k, n = len(b), len(b[0]) if b else 0
    return [[sum(row[t] * b[t][j] for t in range(k)) for j in range(n)] for row in a]


def wide_int_matmul(a, b) -> np.ndarray:
    """int64 broadcast-multiply-and-sum; exact for any int8 operands."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    return (a[:, :, None] * b[None, :, :]).sum(axis=1)


def e4m3_code_to_float(code: int) -> float:
    """Decode an 8-bit e4m3 (finite-only, bias 7) pattern; 0x7F/0xFF are NaN."""
    sign = -1.0 if code & 0x80 else 1.0
    exp = (code >> 3) & 0xF
    frac = code & 0x7
    if exp == 0xF and frac == 0x7:
        return float("nan")
    if exp == 0:
        return sign * (frac / 8.0) * 2.0 ** -6
    return sign * (1.0 + frac / 8.0) * 2.0 ** (exp - 7)


def e4m3_table() -> tuple[np.ndarray, np.ndarray]:
    """Non-negative finite e4m3 values (ascending) and their codes."""
    codes = np.arange(0x7F)
    values = np.array([e4m3_code_to_float(int(c)) for c in codes])
    return values, codes


def e4m3_nearest(x) -> np.ndarray:
    """Round to nearest e4m3 by table search; ties pick the even code; saturates at 448."""
    values, codes = e4m3_table()
    x = np.asarray(x, dtype=np.float64)
    mag = np.minimum(np.abs(x), values[-1])
    hi = np.clip(np.searchsorted(values, mag, side="left"), 1, len(values) - 1)
    lo = hi - 1
    d_lo = mag - values[lo]
    d_hi = values[hi] - mag
    pick_hi = (d_hi < d_lo) | ((d_hi == d_lo) & (codes[hi] % 2 == 0))
    return np.sign(x) * np.where(pick_hi, values[hi], values[lo])


def untiled_int_attention(inputs, score_scale=None) -> np.ndarray:
    """Quantized attention with no tiling: one global row max per query.

    Uses the same float32 score/exp arithmetic as the kernel so that, with a
    single column block, the two agree to float rounding.
    """
    qv = np.asarray(inputs.q.values, dtype=np.int64)
    kv = np.asarray(inputs.k.values, dtype=np.int64)
    vv = np.asarray(inputs.v.values, dtype=np.int64)
    s_int = qv @ kv.T
    s = s_int.astype(np.float32) * inputs.q.scales[:, None] * inputs.k.scales[None, :]
    if score_scale is not None:
        s = s * np.float32(score_scale)
    m = s.max(axis=1)
    p = np.floor(np.float32(127) * np.exp(s - m[:, None]) + np.float32(0.5)).astype(np.int64)
    l = p.sum(axis=1).astype(np.float32)
    pv = (p @ vv).astype(np.float32)
    return pv / l[:, None] * inputs.v.scale
