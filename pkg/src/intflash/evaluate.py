"""Error metrics, MRE table experiments and the desk-scale speed benchmark.

MRE is the normalised L1 error ``sum|candidate - reference| / sum|reference|``
of the attention *output* against the float64 reference. Activation
round-trip MRE (same formula, per input matrix) is reported alongside.

Q, K and V for seed ``s`` are drawn with generator seeds ``3s``, ``3s + 1``
and ``3s + 2``, each as one ``(batch * heads * N) x d`` matrix that is then
split into per-head ``N x d`` slices.
"""

from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .attention import (
    AttentionConfig,
    QuantizedAttentionInputs,
    Variant,
    flash_attention_float,
    half_int8_attention,
    int_flash_attention,
    reference_attention,
    run_attention,
)
from .errors import ParameterError, ShapeError, UndefinedMetricError
from .gemm import BlockSpec, num_blocks
from .quant import (
    dequantize_rows,
    dequantize_tensor,
    fp8_e4m3_roundtrip,
    quantize_per_row,
    quantize_per_tensor,
)
from .tensors import ActivationSpec, Distribution, generate

log = logging.getLogger(__name__)

MRE_FORMULA = "sum|candidate - reference| / sum|reference|"

# Bytes per element of (Q, K, V) as read from memory by each variant.
ELEMENT_WIDTHS = {
    Variant.FLOAT_REFERENCE: (4, 4, 4),
    Variant.FLOAT_FLASH: (4, 4, 4),
    Variant.FULL_INT8: (1, 1, 1),
    Variant.HALF_INT8: (1, 1, 4),
    Variant.FP8_EMULATED: (1, 1, 1),
}


def mre(reference, candidate) -> float:
    ref = np.asarray(reference, dtype=np.float64)
    cand = np.asarray(candidate, dtype=np.float64)
    if ref.shape != cand.shape:
        raise ShapeError(f"mre shapes differ: {ref.shape} vs {cand.shape}")
    denom = np.abs(ref).sum()
    if denom == 0:
        raise UndefinedMetricError("mre is undefined for an all-zero reference")
    return float(np.abs(cand - ref).sum() / denom)


def bytes_loaded_model(variant, seq_len: int, head_dim: int, blocks: BlockSpec,
                       batch: int = 1, heads: int = 1) -> int:
    """Modelled bytes of Q, K, V read by the tiled schedule.

    Q is read once; every row block re-reads all of K and V. The untiled
    reference reads each matrix once.
    """
    wq, wk, wv = ELEMENT_WIDTHS[Variant(variant)]
    nd = seq_len * head_dim
    passes = 1 if Variant(variant) is Variant.FLOAT_REFERENCE else num_blocks(seq_len, blocks.block_r)
    return batch * heads * (wq * nd + (wk + wv) * passes * nd)


@dataclass(frozen=True)
class PlanRow:
    variant: Variant
    seq_len: int
    distribution: Distribution
    seeds: tuple = (0,)
    head_dim: int = 64
    batch: int = 1
    heads: int = 1
    blocks: BlockSpec = field(default_factory=BlockSpec)
    apply_sqrt_d_scaling: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        for name in ("seq_len", "head_dim", "batch", "heads"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.seeds:
            raise ParameterError("a plan row needs at least one seed")

    @property
    def config(self) -> AttentionConfig:
        return AttentionConfig(self.blocks, self.apply_sqrt_d_scaling, self.variant)


@dataclass(frozen=True)
class ExperimentPlan:
    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        if not self.rows:
            raise ParameterError("experiment plan is empty")

    @classmethod
    def grid(cls, variants: Sequence, seq_lens: Sequence[int], distribution: Distribution,
             seeds: Sequence[int] = (0,), **kwargs) -> "ExperimentPlan":
        return cls(tuple(PlanRow(v, n, distribution, tuple(seeds), **kwargs)
                         for n in seq_lens for v in variants))


@dataclass(frozen=True)
class MreReport:
    variant: Variant
    seq_len: int
    head_dim: int
    batch: int
    heads: int
    distribution: str
    seeds: tuple
    mre: float
    mre_per_seed: tuple = ()
    activation_mre: dict = field(default_factory=dict)
    wall_time: float = 0.0
    bytes_loaded_model: int = 0
    blocks: BlockSpec = field(default_factory=BlockSpec)


def generate_qkv(distribution: Distribution, seed: int, seq_len: int, head_dim: int,
                 batch: int = 1, heads: int = 1) -> list:
    """Per-head ``(q, k, v)`` triples for one seed, in (batch, head) order."""
    rows = batch * heads * seq_len
    mats = [generate(ActivationSpec(distribution, 3 * seed + i), rows, head_dim) for i in range(3)]
    return [tuple(m[h * seq_len:(h + 1) * seq_len] for m in mats) for h in range(batch * heads)]


def restored_inputs(variant: Variant, q, k, v):
    """Q, K, V as the variant sees them after quantization and restoration."""
    if variant is Variant.FULL_INT8:
        return (dequantize_rows(quantize_per_row(q)), dequantize_rows(quantize_per_row(k)),
                dequantize_tensor(quantize_per_tensor(v)))
    if variant is Variant.HALF_INT8:
        return dequantize_rows(quantize_per_row(q)), dequantize_rows(quantize_per_row(k)), v
    if variant is Variant.FP8_EMULATED:
        return fp8_e4m3_roundtrip(q), fp8_e4m3_roundtrip(k), fp8_e4m3_roundtrip(v)
    return q, k, v


def _stacked_mre(refs, cands) -> float:
    return mre(np.concatenate(refs), np.concatenate(cands))


def run_table_experiment(plan: ExperimentPlan) -> list:
    """One :class:`MreReport` per plan row, in plan order."""
    ref_cache: dict = {}
    reports = []
    for row in plan.rows:
        cfg = row.config
        per_seed, act = [], {"q": [], "k": [], "v": []}
        elapsed = 0.0
        for seed in row.seeds:
            heads = generate_qkv(row.distribution, seed, row.seq_len, row.head_dim, row.batch, row.heads)
            key = (row.distribution, seed, row.seq_len, row.head_dim, row.batch, row.heads,
                   row.apply_sqrt_d_scaling)
            if key not in ref_cache:
                ref_cache[key] = [reference_attention(q, k, v, cfg, dtype=np.float64) for q, k, v in heads]
            refs = ref_cache[key]
            t0 = time.perf_counter()
            outs = [run_attention(q, k, v, cfg) for q, k, v in heads]
            elapsed += time.perf_counter() - t0
            per_seed.append(_stacked_mre(refs, outs))
            restored = [restored_inputs(row.variant, *h) for h in heads]
            for idx, name in enumerate("qkv"):
                act[name].append(_stacked_mre([h[idx] for h in heads], [r[idx] for r in restored]))
        report = MreReport(
            variant=row.variant, seq_len=row.seq_len, head_dim=row.head_dim, batch=row.batch,
            heads=row.heads, distribution=row.distribution.name, seeds=row.seeds,
            mre=float(np.mean(per_seed)), mre_per_seed=tuple(per_seed),
            activation_mre={n: float(np.mean(v)) for n, v in act.items()},
            wall_time=elapsed,
            bytes_loaded_model=bytes_loaded_model(row.variant, row.seq_len, row.head_dim, row.blocks,
                                                  row.batch, row.heads),
            blocks=row.blocks,
        )
        _log_seed_spread(report)
        reports.append(report)
    return reports


def _log_seed_spread(report: MreReport) -> None:
    if len(report.mre_per_seed) < 2 or report.mre == 0:
        return
    spread = (max(report.mre_per_seed) - min(report.mre_per_seed)) / report.mre
    if report.seq_len >= 1024 and spread >= 0.2:
        log.warning("MRE spread across seeds %.1f%% for %s N=%d (%s)", 100 * spread,
                    report.variant.value, report.seq_len, report.distribution)


def _prepare_kernel(row: PlanRow, q, k, v):
    """Return a zero-argument callable timing only the attention kernel.

    Quantization is post-training calibration and happens outside the timed region.
    """
    cfg = row.config
    if row.variant is Variant.FULL_INT8:
        inputs = QuantizedAttentionInputs.quantize(q, k, v)
        return lambda: int_flash_attention(inputs, cfg)
    if row.variant is Variant.HALF_INT8:
        qq, kq = quantize_per_row(q), quantize_per_row(k)
        return lambda: half_int8_attention(qq, kq, v, cfg)
    if row.variant is Variant.FP8_EMULATED:
        q8, k8, v8 = (fp8_e4m3_roundtrip(x) for x in (q, k, v))
        return lambda: flash_attention_float(q8, k8, v8, cfg)
    if row.variant is Variant.FLOAT_FLASH:
        return lambda: flash_attention_float(q, k, v, cfg)
    return lambda: reference_attention(q, k, v, cfg)


def run_speed_benchmark(plan: ExperimentPlan, repeats: int = 5, warmup: int = 2,
                        with_mre: bool = True) -> list:
    """Median wall time of each row's kernel on its first seed and first head.

    Timings are context only; the modelled byte count is the comparable figure.
    """
    if repeats < 1 or warmup < 0:
        raise ParameterError("repeats must be >= 1 and warmup >= 0")
    reports = []
    for row in plan.rows:
        q, k, v = generate_qkv(row.distribution, row.seeds[0], row.seq_len, row.head_dim)[0]
        kernel = _prepare_kernel(row, q, k, v)
        for _ in range(warmup):
            kernel()
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            out = kernel()
            times.append(time.perf_counter() - t0)
        err: Optional[float] = None
        if with_mre:
            err = mre(reference_attention(q, k, v, row.config, dtype=np.float64), out)
        reports.append(MreReport(
            variant=row.variant, seq_len=row.seq_len, head_dim=row.head_dim, batch=row.batch,
            heads=row.heads, distribution=row.distribution.name, seeds=row.seeds[:1],
            mre=0.0 if err is None else err, wall_time=statistics.median(times),
            bytes_loaded_model=bytes_loaded_model(row.variant, row.seq_len, row.head_dim, row.blocks,
                                                  row.batch, row.heads),
            blocks=row.blocks,
        ))
    return reports
