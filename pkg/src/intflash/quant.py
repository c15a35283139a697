"""Symmetric int8 quantization (per-row and per-tensor) and e4m3 emulation.

Integer codes use round-half-away-from-zero. The quantization ceiling is
``QUANT_RANGE = 127`` so that the code of a row maximum, and the attention
weight ``round(127 * exp(0))``, both fit in a signed byte.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensors import as_float_matrix, as_int8_matrix

QUANT_RANGE = 127

E4M3_MAX = 448.0
E4M3_MANTISSA_BITS = 3
E4M3_MIN_NORMAL_EXP = -6


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class QuantizedRows:
    """Int8 codes with one float32 scale per row (token)."""

    values: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        values = as_int8_matrix(self.values, "values")
        scales = np.asarray(self.scales, dtype=np.float32).reshape(-1)
        if scales.shape[0] != values.shape[0]:
            raise ShapeError(f"{scales.shape[0]} scales for {values.shape[0]} rows")
        if np.any(scales < 0) or not np.all(np.isfinite(scales)):
            raise ShapeError("scales must be finite and non-negative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "scales", scales)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class QuantizedTensor:
    """Int8 codes sharing a single float32 scale."""

    values: np.ndarray
    scale: np.float32

    def __post_init__(self):
        object.__setattr__(self, "values", as_int8_matrix(self.values, "values"))
        scale = np.float32(self.scale)
        if scale < 0 or not np.isfinite(scale):
            raise ShapeError("scale must be finite and non-negative")
        object.__setattr__(self, "scale", scale)

    @property
    def shape(self):
        return self.values.shape


def _codes(x64: np.ndarray, absmax: np.ndarray) -> np.ndarray:
    # x * 127 is exact in float64 for float32 x, so a tie in the real quotient
    # stays a tie after the single rounding of the division.
    safe = np.where(absmax > 0, absmax, 1.0)
    return round_half_away(x64 * QUANT_RANGE / safe).astype(np.int8)


def quantize_per_row(m) -> QuantizedRows:
    """Token-level quantization: ``scale[i] = max_j |m[i, j]| / 127``."""
    x = as_float_matrix(m).astype(np.float64)
    rowmax = np.abs(x).max(axis=1) if x.shape[1] else np.zeros(x.shape[0])
    codes = _codes(x, rowmax[:, None])
    return QuantizedRows(codes, (rowmax / QUANT_RANGE).astype(np.float32))


def quantize_per_tensor(m) -> QuantizedTensor:
    x = as_float_matrix(m).astype(np.float64)
    absmax = np.abs(x).max() if x.size else 0.0
    return QuantizedTensor(_codes(x, np.float64(absmax)), np.float32(absmax / QUANT_RANGE))


def dequantize_rows(q: QuantizedRows) -> np.ndarray:
    return q.values.astype(np.float32) * q.scales[:, None]


def dequantize_tensor(q: QuantizedTensor) -> np.ndarray:
    return q.values.astype(np.float32) * q.scale


def round_to_e4m3(x: np.ndarray) -> np.ndarray:
    """Round float64 values to the nearest e4m3 value (ties to even, saturating at 448).

    e4m3 here is the finite-only variant: 1 sign bit, 4 exponent bits with
    bias 7, 3 mantissa bits, subnormals down to 2**-9.
    """
    x = np.clip(np.asarray(x, dtype=np.float64), -E4M3_MAX, E4M3_MAX)
    _, e = np.frexp(x)
    # frexp gives x = f * 2**e with 0.5 <= |f| < 1, so the leading bit is 2**(e-1).
    exp = np.maximum(e - 1, E4M3_MIN_NORMAL_EXP)
    quantum = np.ldexp(1.0, exp - E4M3_MANTISSA_BITS)
    return np.rint(x / quantum) * quantum


def fp8_e4m3_roundtrip(m) -> np.ndarray:
    """Per-tensor scale into e4m3 range, round to e4m3, and scale back."""
    x = as_float_matrix(m).astype(np.float64)
    absmax = np.abs(x).max() if x.size else 0.0
    if absmax == 0:
        return np.zeros(x.shape, dtype=np.float32)
    s = E4M3_MAX / absmax
    return (round_to_e4m3(x * s) / s).astype(np.float32)


def roundtrip_error_bound(scale, absmax) -> np.ndarray:
    """Largest admissible |dequantize(quantize(x)) - x| in float32 arithmetic.

    Half a quantization step, plus one float32 ulp of the block's largest
    magnitude to absorb rounding of the stored scale and of the product.
    """
    return np.asarray(scale, dtype=np.float64) / 2 + np.spacing(np.asarray(absmax, dtype=np.float32))
