import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from intflash.errors import AccumulatorOverflowError, ParameterError, ShapeError
from intflash.gemm import (
    BlockSpec,
    block_slices,
    check_int32_accumulation,
    float_gemm,
    int_gemm_nn,
    int_gemm_nt,
    tiled_int_gemm_nt,
)
from intflash.oracles import naive_int_matmul, wide_int_matmul
from intflash.quant import dequantize_rows, quantize_per_row

codes = st.integers(-127, 127)


def int8(shape_m, shape_k):
    return arrays(np.int8, st.tuples(shape_m, shape_k), elements=codes)


def test_nt_example():
    a = np.array([[1, 2], [3, 4]], np.int8)
    b = np.array([[5, 6], [7, 8]], np.int8)
    assert int_gemm_nt(a, b).tolist() == [[17, 23], [39, 53]]
    assert int_gemm_nt(a, b).dtype == np.int32


def test_nn_example():
    a = np.array([[1, 2], [3, 4]], np.int8)
    b = np.array([[5, 6], [7, 8]], np.int8)
    assert int_gemm_nn(a, b).tolist() == [[19, 22], [43, 50]]


def test_basis_selects_columns():
    a = np.arange(-6, 6, dtype=np.int8).reshape(3, 4)
    basis = np.eye(4, dtype=np.int8)[[2, 0]]
    assert np.array_equal(int_gemm_nt(a, basis), a[:, [2, 0]])
    assert np.array_equal(int_gemm_nn(a, np.eye(4, dtype=np.int8)), a)


def test_random_64_against_naive(rng):
    a = rng.integers(-127, 128, (64, 64), dtype=np.int8)
    b = rng.integers(-127, 128, (64, 64), dtype=np.int8)
    assert int_gemm_nt(a, b).tolist() == naive_int_matmul(a, b.T)
    assert int_gemm_nn(a, b).tolist() == naive_int_matmul(a, b)


@given(st.data())
def test_int_gemm_matches_wide_oracle(data):
    m, k, n = (data.draw(st.integers(1, 97)) for _ in range(3))
    a = data.draw(int8(st.just(m), st.just(k)))
    b = data.draw(int8(st.just(n), st.just(k)))
    c = data.draw(int8(st.just(k), st.just(n)))
    assert np.array_equal(int_gemm_nt(a, b), wide_int_matmul(a, b.T))
    assert np.array_equal(int_gemm_nn(a, c), wide_int_matmul(a, c))


def test_extreme_codes_long_reduction():
    k = 4096
    a = np.full((2, k), 127, np.int8)
    b = np.full((2, k), -127, np.int8)
    assert int_gemm_nt(a, b)[0, 0] == -127 * 127 * k


def test_overflow_precondition():
    k_max = (2**31 - 1) // (127 * 127)
    check_int32_accumulation(k_max)
    with pytest.raises(AccumulatorOverflowError):
        check_int32_accumulation(k_max + 1)
    with pytest.raises(AccumulatorOverflowError):
        int_gemm_nt(np.zeros((1, k_max + 1), np.int8), np.zeros((1, k_max + 1), np.int8))


def test_shape_errors():
    with pytest.raises(ShapeError):
        int_gemm_nt(np.zeros((2, 3), np.int8), np.zeros((2, 4), np.int8))
    with pytest.raises(ShapeError):
        int_gemm_nn(np.zeros((2, 3), np.int8), np.zeros((2, 3), np.int8))
    with pytest.raises(ShapeError):
        float_gemm(np.zeros((2, 3), np.float32), np.zeros((2, 3), np.float32))


def test_rejects_minus_128_and_floats():
    with pytest.raises(ValueError):
        int_gemm_nt(np.array([[-128]], np.int8), np.array([[1]], np.int8))
    with pytest.raises(ValueError):
        int_gemm_nt(np.array([[1.5]]), np.array([[1]], np.int8))


def test_block_spec_validation():
    with pytest.raises(ParameterError):
        BlockSpec(0, 4)
    assert [(s.start, s.stop) for s in block_slices(7, 3)] == [(0, 3), (3, 6), (6, 7)]


def test_float_gemm_small_cases():
    assert float_gemm(np.array([[2]], np.float32), np.array([[3]], np.float32)).tolist() == [[6.0]]
    a = np.arange(12, dtype=np.float32).reshape(3, 4) / 7
    assert np.array_equal(float_gemm(a, np.eye(4, dtype=np.float32)), a)


def test_float_gemm_close_to_float64(rng):
    a = rng.standard_normal((128, 64)).astype(np.float32)
    b = rng.standard_normal((64, 128)).astype(np.float32)
    out = float_gemm(a, b)
    assert out.dtype == np.float32
    assert np.abs(out - a.astype(np.float64) @ b.astype(np.float64)).max() <= 1e-3


def test_float_gemm_order_is_ascending_loop(rng):
    a = rng.standard_normal((5, 9)).astype(np.float32)
    b = rng.standard_normal((7, 9)).astype(np.float32)
    expect = np.zeros((5, 7), np.float32)
    for t in range(9):
        expect = expect + np.outer(a[:, t], b[:, t]).astype(np.float32)
    out = float_gemm(a, b, transpose_b=True)
    assert out.tobytes() == expect.tobytes()
    assert float_gemm(a, b, transpose_b=True).tobytes() == out.tobytes()


@given(st.data())
def test_tiled_equals_untiled(data):
    m, k, n = (data.draw(st.integers(1, 40)) for _ in range(3))
    a = data.draw(int8(st.just(m), st.just(k)))
    b = data.draw(int8(st.just(n), st.just(k)))
    blocks = BlockSpec(data.draw(st.integers(1, 50)), data.draw(st.integers(1, 50)))
    assert np.array_equal(tiled_int_gemm_nt(a, b, blocks), int_gemm_nt(a, b))


@given(st.integers(1, 16), st.integers(1, 256), st.integers(0, 2**32 - 1))
def test_scaling_commutes_with_int_gemm(n, d, seed):
    rng = np.random.default_rng(seed)
    q = quantize_per_row(rng.standard_normal((n, d)).astype(np.float32))
    k = quantize_per_row(rng.standard_normal((n, d)).astype(np.float32))
    scaled = int_gemm_nt(q.values, k.values).astype(np.float32) * q.scales[:, None] * k.scales[None, :]
    direct = float_gemm(dequantize_rows(q), dequantize_rows(k), transpose_b=True)
    assert np.abs(scaled - direct).max() <= 1e-4
