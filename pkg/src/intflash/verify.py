"""Self-check suites run by ``intflash verify``.

Each suite returns a :class:`SuiteResult`; inputs are drawn from fixed seeds
so a run is reproducible byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import (
    AttentionConfig,
    QuantizedAttentionInputs,
    Variant,
    flash_attention_float,
    int_flash_attention,
    reference_attention,
    run_attention,
)
from .gemm import BlockSpec, float_gemm, int_gemm_nn, int_gemm_nt, tiled_int_gemm_nt
from .oracles import untiled_int_attention, wide_int_matmul
from .quant import QUANT_RANGE, dequantize_rows, quantize_per_row
from .tensors import ActivationSpec, Normal, generate


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _qkv(n: int, d: int, seed: int):
    return [generate(ActivationSpec(Normal(), 3 * seed + i), n, d) for i in range(3)]


def relaxed_int_bound(inputs: QuantizedAttentionInputs) -> float:
    """Allowed gap between multi-block and single-block full-int8 outputs: 2/127 * max|V|."""
    return 2.0 / QUANT_RANGE * float(np.abs(inputs.v.values).max()) * float(inputs.v.scale)


def gemm_oracle(blocks: BlockSpec, cases: int = 200) -> SuiteResult:
    rng = _rng(1)
    for case in range(cases):
        m, k, n = (int(x) for x in rng.integers(1, 48, size=3))
        a = rng.integers(-127, 128, size=(m, k), dtype=np.int8)
        b = rng.integers(-127, 128, size=(n, k), dtype=np.int8)
        c = rng.integers(-127, 128, size=(k, n), dtype=np.int8)
        if not np.array_equal(int_gemm_nt(a, b), wide_int_matmul(a, b.T)):
            return SuiteResult("gemm-oracle", False, f"int_gemm_nt mismatch at case {case} ({m}x{k}x{n})")
        if not np.array_equal(int_gemm_nn(a, c), wide_int_matmul(a, c)):
            return SuiteResult("gemm-oracle", False, f"int_gemm_nn mismatch at case {case} ({m}x{k}x{n})")
        if not np.array_equal(tiled_int_gemm_nt(a, b, blocks), int_gemm_nt(a, b)):
            return SuiteResult("gemm-oracle", False, f"tiled int gemm mismatch at case {case}")
    return SuiteResult("gemm-oracle", True, f"{cases} cases exact")


def float_vs_reference(blocks: BlockSpec, cases: int = 40, tol: float = 1e-4) -> SuiteResult:
    rng = _rng(2)
    worst = 0.0
    for case in range(cases):
        n, d = int(rng.integers(1, 65)), int(rng.integers(1, 17))
        q, k, v = _qkv(n, d, 100 + case)
        cfg = AttentionConfig(blocks=blocks)
        err = float(np.abs(flash_attention_float(q, k, v, cfg) - reference_attention(q, k, v, cfg)).max())
        worst = max(worst, err)
        if err > tol:
            return SuiteResult("float-vs-reference", False, f"case {case} N={n} d={d}: max|diff|={err:.3g}")
    return SuiteResult("float-vs-reference", True, f"{cases} cases, max|diff|={worst:.3g}")


def tiling_invariance(blocks: BlockSpec, tol: float = 1e-5) -> SuiteResult:
    n, d = 24, 8
    q, k, v = _qkv(n, d, 7)
    specs = [BlockSpec(1, 1), BlockSpec(2, 3), BlockSpec(8, 8), BlockSpec(n, n), blocks]
    for variant in (Variant.FLOAT_FLASH, Variant.HALF_INT8, Variant.FULL_INT8, Variant.FP8_EMULATED):
        base = run_attention(q, k, v, AttentionConfig(BlockSpec(n, n), variant=variant))
        limit = tol
        if variant is Variant.FULL_INT8:
            limit = relaxed_int_bound(QuantizedAttentionInputs.quantize(q, k, v))
        for spec in specs:
            out = run_attention(q, k, v, AttentionConfig(spec, variant=variant))
            err = float(np.abs(out - base).max())
            if err > limit:
                return SuiteResult("tiling-invariance", False,
                                   f"{variant.value} blocks {spec.block_r}x{spec.block_c}: "
                                   f"max|diff|={err:.3g} > {limit:.3g}")
    return SuiteResult("tiling-invariance", True, f"4 variants x {len(specs)} block specs")


def quantized_oracle(blocks: BlockSpec, tol: float = 1e-5) -> SuiteResult:
    for seed, (n, d) in enumerate([(24, 8), (64, 16), (37, 5)]):
        inputs = QuantizedAttentionInputs.quantize(*_qkv(n, d, 20 + seed))
        oracle = untiled_int_attention(inputs)
        single = int_flash_attention(inputs, AttentionConfig(BlockSpec(blocks.block_r, n)))
        err = float(np.abs(single - oracle).max())
        if err > tol:
            return SuiteResult("quantized-oracle", False,
                               f"single column block N={n} d={d}: max|diff|={err:.3g}")
        multi = int_flash_attention(inputs, AttentionConfig(blocks))
        err = float(np.abs(multi - oracle).max())
        bound = relaxed_int_bound(inputs)
        if err > bound:
            return SuiteResult("quantized-oracle", False,
                               f"multi-block N={n} d={d}: max|diff|={err:.3g} > {bound:.3g}")
    return SuiteResult("quantized-oracle", True, "3 shapes")


def p_code_range(blocks: BlockSpec) -> SuiteResult:
    n, d = 48, 16
    inputs = QuantizedAttentionInputs.quantize(*_qkv(n, d, 31))
    blocks_seen = {}

    def observe(i, j, p, m):
        blocks_seen[(i, j)] = (p.copy(), m.copy())

    int_flash_attention(inputs, AttentionConfig(blocks), observer=observe)
    for (i, j), (p, _) in blocks_seen.items():
        if p.min() < 0 or p.max() > QUANT_RANGE:
            return SuiteResult("p-code-range", False, f"block ({i},{j}) has codes outside [0, 127]")
    # Every row must hit 127 in the column block that holds its maximum score.
    q_s = np.asarray(inputs.q.values, np.int64) @ np.asarray(inputs.k.values, np.int64).T
    s = q_s.astype(np.float32) * inputs.q.scales[:, None] * inputs.k.scales[None, :]
    argmax = s.argmax(axis=1)
    for row in range(n):
        i, r = divmod(row, blocks.block_r)
        j, c = divmod(int(argmax[row]), blocks.block_c)
        p, _ = blocks_seen[(i, j)]
        if p[r].max() != QUANT_RANGE:
            return SuiteResult("p-code-range", False,
                               f"row {row}: max code {int(p[r].max())} in block of its max score")
    return SuiteResult("p-code-range", True, f"{len(blocks_seen)} blocks checked")


def scaling_linearity(cases: int = 30, tol: float = 1e-4) -> SuiteResult:
    rng = _rng(5)
    for case in range(cases):
        n, d = int(rng.integers(1, 33)), int(rng.integers(1, 257))
        q = quantize_per_row(generate(ActivationSpec(Normal(), 1000 + 2 * case), n, d))
        k = quantize_per_row(generate(ActivationSpec(Normal(), 1001 + 2 * case), n, d))
        scaled = int_gemm_nt(q.values, k.values).astype(np.float32) * q.scales[:, None] * k.scales[None, :]
        direct = float_gemm(dequantize_rows(q), dequantize_rows(k), transpose_b=True)
        err = float(np.abs(scaled - direct).max())
        if err > tol:
            return SuiteResult("scaling-linearity", False, f"case {case} d={d}: max|diff|={err:.3g}")
    return SuiteResult("scaling-linearity", True, f"{cases} cases")


def run_all(blocks: BlockSpec = BlockSpec(16, 16)) -> list:
    return [
        gemm_oracle(blocks),
        float_vs_reference(blocks),
        tiling_invariance(blocks),
        quantized_oracle(blocks),
        p_code_range(blocks),
        scaling_linearity(),
    ]
