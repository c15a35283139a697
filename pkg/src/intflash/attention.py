"""Attention forward passes sharing one tiling skeleton.

* :func:`reference_attention`    untiled softmax(QK^T) V in float64 (the oracle)
* :func:`flash_attention_float`  tiled online softmax in float32
* :func:`int_flash_attention`    int8 Q/K/V, int8 attention weights, int32 GEMMs
* :func:`half_int8_attention`    int8 Q/K, float V and float attention weights
* :func:`fp8_emulated_attention` e4m3-degraded inputs through the float path

All tiled kernels iterate row blocks of Q in the outer loop and K/V column
blocks in the inner loop. The m/l bookkeeping and ``exp`` run in float32.
Scores are not scaled by 1/sqrt(d) unless ``apply_sqrt_d_scaling`` is set.
Row sums use ``np.cumsum`` (strictly left-to-right) so results do not depend
on numpy's pairwise-summation heuristics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .errors import ShapeError
from .gemm import (
    BlockSpec,
    block_slices,
    check_int32_accumulation,
    float_gemm,
    int_gemm_nn,
    int_gemm_nt,
)
from .quant import (
    QUANT_RANGE,
    QuantizedRows,
    QuantizedTensor,
    fp8_e4m3_roundtrip,
    quantize_per_row,
    quantize_per_tensor,
)
from .tensors import as_float_matrix


class Variant(str, Enum):
    FLOAT_REFERENCE = "reference"
    FLOAT_FLASH = "float"
    FULL_INT8 = "full-int8"
    HALF_INT8 = "half-int8"
    FP8_EMULATED = "fp8"


@dataclass(frozen=True)
class AttentionConfig:
    blocks: BlockSpec = field(default_factory=BlockSpec)
    apply_sqrt_d_scaling: bool = False
    variant: Variant = Variant.FLOAT_FLASH

    def score_scale(self, d: int):
        return 1.0 / np.sqrt(d) if self.apply_sqrt_d_scaling else None


DEFAULT_CONFIG = AttentionConfig()


@dataclass(frozen=True)
class QuantizedAttentionInputs:
    q: QuantizedRows
    k: QuantizedRows
    v: QuantizedTensor

    def __post_init__(self):
        if not (self.q.shape == self.k.shape == self.v.shape):
            raise ShapeError(
                f"q, k, v must share N x d, got {self.q.shape}, {self.k.shape}, {self.v.shape}"
            )

    @classmethod
    def quantize(cls, q, k, v) -> "QuantizedAttentionInputs":
        return cls(quantize_per_row(q), quantize_per_row(k), quantize_per_tensor(v))


@dataclass(frozen=True)
class SoftmaxState:
    """Running (m, l, O_acc) of the online softmax for one row block."""

    m: np.ndarray
    l: np.ndarray
    o_acc: np.ndarray

    @classmethod
    def initial(cls, rows: int, d: int) -> "SoftmaxState":
        return cls(
            np.full(rows, -np.inf, dtype=np.float32),
            np.zeros(rows, dtype=np.float32),
            np.zeros((rows, d), dtype=np.float32),
        )

    def finalize(self) -> np.ndarray:
        return self.o_acc / self.l[:, None]


def _check_qkv(q, k, v):
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"q and k head dims differ: {q.shape} vs {k.shape}")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"k and v sequence lengths differ: {k.shape} vs {v.shape}")
    if q.shape[0] < 1 or k.shape[0] < 1:
        raise ShapeError("attention needs at least one query and one key")


def _rowsum(x: np.ndarray) -> np.ndarray:
    return np.cumsum(x, axis=1, dtype=x.dtype)[:, -1]


def _running_max(m: np.ndarray, s_block: np.ndarray):
    """New running max and the rescale factor exp(m_old - m_new)."""
    m_new = np.maximum(m, s_block.max(axis=1))
    # exp(-inf - finite) = 0; a row still at -inf has nothing to rescale.
    with np.errstate(invalid="ignore"):
        alpha = np.exp(m - m_new)
    alpha = np.where(np.isneginf(m_new), np.float32(1), alpha).astype(np.float32)
    return m_new, alpha


def merge_softmax_state(state: SoftmaxState, s_block, v_block) -> SoftmaxState:
    """Fold one (Br x Bc) score block and its (Bc x d) value block into ``state``."""
    s_block = np.asarray(s_block, dtype=np.float32)
    v_block = as_float_matrix(v_block, "v_block")
    if s_block.ndim != 2 or s_block.shape[0] != state.m.shape[0]:
        raise ShapeError(f"score block {s_block.shape} does not match state rows {state.m.shape}")
    if s_block.shape[1] != v_block.shape[0] or v_block.shape[1] != state.o_acc.shape[1]:
        raise ShapeError(f"score block {s_block.shape} incompatible with value block {v_block.shape}")
    m_new, alpha = _running_max(state.m, s_block)
    with np.errstate(invalid="ignore"):
        p = np.exp(s_block - m_new[:, None])
    p = np.where(np.isneginf(m_new)[:, None], np.float32(0), p).astype(np.float32)
    l_new = state.l * alpha + _rowsum(p)
    o_new = alpha[:, None] * state.o_acc + float_gemm(p, v_block)
    return SoftmaxState(m_new, l_new, o_new)


def reference_attention(q, k, v, cfg: AttentionConfig = DEFAULT_CONFIG, dtype=np.float32) -> np.ndarray:
    """Untiled softmax(QK^T) V with float64 accumulation and max subtraction."""
    p = attention_weights(q, k, cfg)
    v64 = as_float_matrix(v, "v").astype(np.float64)
    if v64.shape[0] != p.shape[1]:
        raise ShapeError(f"k and v sequence lengths differ: {p.shape[1]} vs {v64.shape[0]}")
    return _ordered_matmul(p, v64).astype(dtype)


def attention_weights(q, k, cfg: AttentionConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Row-stochastic float64 weight matrix softmax(QK^T)."""
    q64 = as_float_matrix(q, "q").astype(np.float64)
    k64 = as_float_matrix(k, "k").astype(np.float64)
    if q64.shape[1] != k64.shape[1]:
        raise ShapeError(f"q and k head dims differ: {q64.shape} vs {k64.shape}")
    s = _ordered_matmul(q64, k64.T)
    scale = cfg.score_scale(q64.shape[1])
    if scale is not None:
        s = s * scale
    e = np.exp(s - s.max(axis=1, keepdims=True))
    return e / _rowsum(e)[:, None]


def _ordered_matmul(a: np.ndarray, b: np.ndarray, chunk_bytes: int = 1 << 18) -> np.ndarray:
    # Same ascending-t loop as float_gemm, kept in a's dtype (float64 here).
    # Rows are processed in chunks small enough for the running tile to stay in cache.
    a_cols = np.ascontiguousarray(a.T)
    b = np.ascontiguousarray(b)
    out = np.empty((a.shape[0], b.shape[1]), dtype=a.dtype)
    step = max(1, chunk_bytes // (b.shape[1] * out.itemsize))
    for r in range(0, a.shape[0], step):
        acc = a_cols[0, r:r + step, None] * b[0]
        tmp = np.empty_like(acc)
        for t in range(1, a.shape[1]):
            np.multiply(a_cols[t, r:r + step, None], b[t], out=tmp)
            acc += tmp
        out[r:r + step] = acc
    return out


def _float_flash(scores: Callable[[slice, slice], np.ndarray], v: np.ndarray, n_q: int,
                 blocks: BlockSpec) -> np.ndarray:
    n_k, d = v.shape
    out = np.empty((n_q, d), dtype=np.float32)
    for rs in block_slices(n_q, blocks.block_r):
        state = SoftmaxState.initial(rs.stop - rs.start, d)
        for cs in block_slices(n_k, blocks.block_c):
            state = merge_softmax_state(state, scores(rs, cs), v[cs])
        out[rs] = state.finalize()
    return out


def _scaled(s: np.ndarray, scale) -> np.ndarray:
    return s if scale is None else s * np.float32(scale)


def flash_attention_float(q, k, v, cfg: AttentionConfig = DEFAULT_CONFIG) -> np.ndarray:
    q = as_float_matrix(q, "q")
    k = as_float_matrix(k, "k")
    v = as_float_matrix(v, "v")
    _check_qkv(q, k, v)
    scale = cfg.score_scale(q.shape[1])

    def scores(rs, cs):
        return _scaled(float_gemm(q[rs], k[cs], transpose_b=True), scale)

    return _float_flash(scores, v, q.shape[0], cfg.blocks)


def _int_scores(q: QuantizedRows, k: QuantizedRows, rs: slice, cs: slice, scale) -> np.ndarray:
    s_int = int_gemm_nt(q.values[rs], k.values[cs]).astype(np.float32)
    s = s_int * q.scales[rs, None] * k.scales[None, cs]
    return _scaled(s, scale)


def _quantize_weights(s: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Attention-weight codes round(127 * exp(s - m)), half away from zero."""
    p = np.float32(QUANT_RANGE) * np.exp(s - m[:, None])
    return np.floor(p + np.float32(0.5)).astype(np.int8)


BlockObserver = Callable[[int, int, np.ndarray, np.ndarray], None]


def int_flash_attention(inputs: QuantizedAttentionInputs, cfg: AttentionConfig = DEFAULT_CONFIG,
                        observer: Optional[BlockObserver] = None) -> np.ndarray:
    """Fully int8 forward pass.

    ``observer(i, j, p_codes, m)`` is called after each inner step with the
    row/column block indices, the int8 attention-weight codes of that block
    and the running row max they were rounded against.
    """
    q, k, v = inputs.q, inputs.k, inputs.v
    n, d = q.shape
    check_int32_accumulation(d)
    # P.V reduces over at most block_c columns of codes in [0, 127] x [-127, 127].
    check_int32_accumulation(min(cfg.blocks.block_c, n))
    scale = cfg.score_scale(d)
    out = np.empty((n, d), dtype=np.float32)
    for i, rs in enumerate(block_slices(n, cfg.blocks.block_r)):
        rows = rs.stop - rs.start
        m = np.full(rows, -np.inf, dtype=np.float32)
        l = np.zeros(rows, dtype=np.float32)
        o = np.zeros((rows, d), dtype=np.float32)
        for j, cs in enumerate(block_slices(n, cfg.blocks.block_c)):
            s = _int_scores(q, k, rs, cs, scale)
            m_new, alpha = _running_max(m, s)
            p = _quantize_weights(s, m_new)
            l = l * alpha + _rowsum(p.astype(np.int32)).astype(np.float32)
            o = alpha[:, None] * o + int_gemm_nn(p, v.values[cs]).astype(np.float32)
            if observer is not None:
                observer(i, j, p, m_new)
            m = m_new
        out[rs] = o / l[:, None] * v.scale
    return out


def half_int8_attention(q: QuantizedRows, k: QuantizedRows, v, cfg: AttentionConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Int8 Q/K scores with float attention weights and float V."""
    v = as_float_matrix(v, "v")
    _check_qkv(q.values, k.values, v)
    check_int32_accumulation(q.shape[1])
    scale = cfg.score_scale(q.shape[1])
    return _float_flash(lambda rs, cs: _int_scores(q, k, rs, cs, scale), v, q.shape[0], cfg.blocks)


def fp8_emulated_attention(q, k, v, cfg: AttentionConfig = DEFAULT_CONFIG) -> np.ndarray:
    return flash_attention_float(
        fp8_e4m3_roundtrip(q), fp8_e4m3_roundtrip(k), fp8_e4m3_roundtrip(v), cfg
    )


def run_attention(q, k, v, cfg: AttentionConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Dispatch on ``cfg.variant``, quantizing float inputs where the variant needs it."""
    variant = Variant(cfg.variant)
    if variant is Variant.FLOAT_REFERENCE:
        return reference_attention(q, k, v, cfg)
    if variant is Variant.FLOAT_FLASH:
        return flash_attention_float(q, k, v, cfg)
    if variant is Variant.FULL_INT8:
        return int_flash_attention(QuantizedAttentionInputs.quantize(q, k, v), cfg)
    if variant is Variant.HALF_INT8:
        return half_int8_attention(quantize_per_row(q), quantize_per_row(k), v, cfg)
    if variant is Variant.FP8_EMULATED:
        return fp8_emulated_attention(q, k, v, cfg)
    raise ValueError(f"unhandled variant {variant}")
