"""GEMM kernels: exact int8 x int8 -> int32, and fixed-order float32.

``int_gemm_nt`` / ``int_gemm_nn`` run the product through float64 BLAS.
Every partial sum is an integer of magnitude at most ``k * 127 * 127``,
far below ``2**53``, so each addition is exact and the result does not
depend on the BLAS summation order. The int32 no-overflow precondition
``k * 127 * 127 < 2**31`` is checked up front.

``float_gemm`` accumulates in float32 with a fixed loop nest::

    for t in range(k):            # ascending reduction index
        out[i, j] += a[i, t] * b[t, j]   # product rounded, then sum rounded

vectorised over (i, j) only. No BLAS call is involved, so results are
reproducible bit-for-bit on any IEEE-754 platform.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import AccumulatorOverflowError, ParameterError, ShapeError
from .tensors import as_float_matrix, as_int8_matrix

INT32_MAX = 2**31 - 1
_MAX_PRODUCT = 127 * 127


@dataclass(frozen=True)
class BlockSpec:
    block_r: int = 64
    block_c: int = 64

    def __post_init__(self):
        if int(self.block_r) < 1 or int(self.block_c) < 1:
            raise ParameterError(f"block sizes must be >= 1, got {self.block_r}x{self.block_c}")


def block_slices(n: int, size: int) -> Iterator[slice]:
    """Consecutive slices of length ``size`` covering ``range(n)``; the last may be short."""
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def num_blocks(n: int, size: int) -> int:
    return -(-n // size)


def check_int32_accumulation(k: int, max_abs_a: int = 127, max_abs_b: int = 127) -> None:
    if k * max_abs_a * max_abs_b > INT32_MAX:
        raise AccumulatorOverflowError(
            f"reduction length {k} with operands up to {max_abs_a}x{max_abs_b} may overflow int32"
        )


def _int_gemm(a: np.ndarray, b_kn: np.ndarray) -> np.ndarray:
    check_int32_accumulation(a.shape[1])
    out = a.astype(np.float64) @ b_kn.astype(np.float64)
    return out.astype(np.int32)


def int_gemm_nt(a, b) -> np.ndarray:
    """``a @ b.T`` for int8 ``a`` (m x k) and ``b`` (n x k), int32 result."""
    a = as_int8_matrix(a, "a")
    b = as_int8_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"int_gemm_nt inner dimensions differ: {a.shape} vs {b.shape}")
    return _int_gemm(a, b.T)


def int_gemm_nn(a, b) -> np.ndarray:
    """``a @ b`` for int8 ``a`` (m x k) and ``b`` (k x n), int32 result."""
    a = as_int8_matrix(a, "a")
    b = as_int8_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"int_gemm_nn inner dimensions differ: {a.shape} vs {b.shape}")
    return _int_gemm(a, b)


def float_gemm(a, b, transpose_b: bool = False) -> np.ndarray:
    a = as_float_matrix(a, "a")
    b = as_float_matrix(b, "b")
    if transpose_b:
        b = b.T
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"float_gemm inner dimensions differ: {a.shape} vs {b.shape}")
    m, k = a.shape
    n = b.shape[1]
    if k == 0:
        return np.zeros((m, n), dtype=np.float32)
    # Explicit loop: numpy's own reductions switch to pairwise summation
    # for some shapes, which would make the order shape-dependent.
    out = a[:, 0, None] * b[0]
    tmp = np.empty_like(out)
    for t in range(1, k):
        np.multiply(a[:, t, None], b[t], out=tmp)
        out += tmp
    return out


def tiled_int_gemm_nt(a, b, blocks: BlockSpec) -> np.ndarray:
    """``int_gemm_nt`` evaluated one (block_r x block_c) output tile at a time."""
    a = as_int8_matrix(a, "a")
    b = as_int8_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"int_gemm_nt inner dimensions differ: {a.shape} vs {b.shape}")
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.int32)
    for rs in block_slices(a.shape[0], blocks.block_r):
        for cs in block_slices(b.shape[0], blocks.block_c):
            out[rs, cs] = int_gemm_nt(a[rs], b[cs])
    return out
