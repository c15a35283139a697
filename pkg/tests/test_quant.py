from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from intflash.errors import ShapeError
from intflash.oracles import e4m3_nearest, e4m3_table
from intflash.quant import (
    QUANT_RANGE,
    QuantizedRows,
    dequantize_rows,
    dequantize_tensor,
    fp8_e4m3_roundtrip,
    quantize_per_row,
    quantize_per_tensor,
    round_to_e4m3,
    roundtrip_error_bound,
)
from intflash.tensors import ActivationSpec, Normal, generate

finite32 = st.floats(-1e6, 1e6, width=32, allow_subnormal=False)
matrices = arrays(np.float32, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=finite32)


def fraction_codes(row):
    """Exact rational round-half-away of x * 127 / max|x|."""
    top = max(abs(Fraction(float(x))) for x in row)
    out = []
    for x in row:
        r = Fraction(float(x)) * 127 / top
        mag = int(abs(r) + Fraction(1, 2))
        out.append(mag if r >= 0 else -mag)
    return out


def test_row_example():
    q = quantize_per_row(np.array([[2.0, -1.0, 0.5]], np.float32))
    assert q.values.tolist() == [[127, -64, 32]]
    assert q.values.tolist()[0] == fraction_codes([2.0, -1.0, 0.5])
    assert q.scales[0] == np.float32(2 / 127)


def test_zero_matrix():
    q = quantize_per_row(np.zeros((2, 3), np.float32))
    assert q.scales.tolist() == [0.0, 0.0]
    assert not q.values.any()
    assert not dequantize_rows(q).any()
    t = quantize_per_tensor(np.zeros((2, 3), np.float32))
    assert t.scale == 0 and not t.values.any()


def test_single_element_row():
    q = quantize_per_row(np.array([[1.0]], np.float32))
    assert q.values.tolist() == [[127]]
    assert q.scales[0] == np.float32(1 / 127)
    assert dequantize_rows(q)[0, 0] == np.float32(1.0)


def test_dequantize_code_127():
    q = QuantizedRows(np.array([[127]], np.int8), np.array([1 / 127], np.float32))
    assert dequantize_rows(q)[0, 0] == 1.0


def test_per_tensor_example():
    t = quantize_per_tensor(np.array([[1, -2], [0.5, 2]], np.float32))
    assert t.values.tolist() == [[64, -127], [32, 127]]
    assert t.scale == np.float32(2 / 127)


def test_scales_length_checked():
    with pytest.raises(ShapeError):
        QuantizedRows(np.zeros((2, 2), np.int8), np.zeros(3, np.float32))


@given(matrices)
def test_codes_match_exact_rational(m):
    q = quantize_per_row(m)
    for row, codes in zip(m, q.values):
        if np.abs(row).max() == 0:
            assert not codes.any()
        else:
            assert codes.tolist() == fraction_codes(row)


@given(matrices)
def test_row_max_code_is_127(m):
    q = quantize_per_row(m)
    nonzero = np.abs(m).max(axis=1) > 0
    assert np.all(np.abs(q.values[nonzero]).max(axis=1) == QUANT_RANGE)
    assert np.all(q.scales[~nonzero] == 0)
    assert q.values.min() >= -127


@given(matrices)
def test_symmetry(m):
    a, b = quantize_per_row(m), quantize_per_row(-m)
    assert np.array_equal(a.values, -b.values)
    assert np.array_equal(a.scales, b.scales)
    t, u = quantize_per_tensor(m), quantize_per_tensor(-m)
    assert np.array_equal(t.values, -u.values) and t.scale == u.scale


@given(matrices, st.sampled_from([0.25, 0.5, 2.0, 8.0, 1024.0]))
def test_scale_invariance_power_of_two(m, c):
    # power-of-two factors are exact, so ties stay ties and codes must match.
    a, b = quantize_per_row(m), quantize_per_row(m * np.float32(c))
    assert np.array_equal(a.values, b.values)
    # scales scale exactly too, unless one of them is subnormal
    normal = (a.scales >= np.finfo(np.float32).tiny) & (b.scales >= np.finfo(np.float32).tiny)
    assert np.array_equal(b.scales[normal], a.scales[normal] * np.float32(c))


@given(matrices, st.floats(0.01, 100.0))
def test_scale_invariance_away_from_ties(m, c):
    x = m.astype(np.float64)
    top = np.abs(x).max(axis=1, keepdims=True)
    assume(np.all(top > 0))
    frac = (np.abs(x) * 127 / top) % 1.0
    assume(np.all(np.abs(frac - 0.5) > 1e-4))
    cm = (m.astype(np.float64) * c).astype(np.float32)
    assert np.array_equal(quantize_per_row(m).values, quantize_per_row(cm).values)


@given(matrices)
def test_roundtrip_bound(m):
    q = quantize_per_row(m)
    err = np.abs(dequantize_rows(q).astype(np.float64) - m)
    bound = roundtrip_error_bound(q.scales[:, None], np.abs(m).max(axis=1, keepdims=True))
    assert np.all(err <= bound)
    t = quantize_per_tensor(m)
    assert np.all(np.abs(dequantize_tensor(t).astype(np.float64) - m)
                  <= roundtrip_error_bound(t.scale, np.abs(m).max()))


@given(matrices)
def test_extremum_within_one_ulp(m):
    # 127 * fl32(max/127) can land one ulp off the stored maximum in float32.
    # A subnormal scale carries fewer bits, so only normal scales are held to this.
    q = quantize_per_row(m)
    normal = q.scales >= np.finfo(np.float32).tiny
    top = np.abs(m).max(axis=1)[normal]
    back = np.abs(dequantize_rows(q)).max(axis=1)[normal]
    assert np.all(np.abs(back - top) <= np.spacing(top))


def test_extremum_exact_for_scale_times_127():
    for s in [1.0, 0.5, 2.0**-10, 3.0]:
        m = np.array([[127 * s, -0.3 * s, 0.0]], np.float32)
        q = quantize_per_tensor(m)
        assert np.abs(dequantize_tensor(q)).max() == np.float32(127 * s)


def test_fp8_zero():
    assert not fp8_e4m3_roundtrip(np.zeros((3, 3), np.float32)).any()


def test_fp8_grid_exact():
    m = np.array([[448, -224, 0], [224, -448, 0]], np.float32) / np.float32(7)
    assert np.array_equal(fp8_e4m3_roundtrip(m), m)


def test_e4m3_table_size_and_max():
    values, _ = e4m3_table()
    assert values[-1] == 448.0 and values[1] == 2.0**-9
    assert np.all(np.diff(values) > 0)


def test_round_to_e4m3_matches_table_oracle():
    values, _ = e4m3_table()
    mids = (values[1:] + values[:-1]) / 2
    rng = np.random.default_rng(3)
    probes = np.concatenate([values, mids, np.nextafter(mids, 0), np.nextafter(mids, 1e9),
                             rng.uniform(-500, 500, 5000), rng.normal(0, 0.01, 2000), [448.5, 1e6]])
    probes = np.concatenate([probes, -probes])
    assert np.array_equal(round_to_e4m3(probes), e4m3_nearest(probes))


@given(st.floats(-600, 600, allow_nan=False))
def test_round_to_e4m3_property(x):
    assert round_to_e4m3(np.array([x]))[0] == e4m3_nearest(np.array([x]))[0]


def test_fp8_relative_error_normal_range():
    m = generate(ActivationSpec(Normal(), 5), 1024, 64)
    out = fp8_e4m3_roundtrip(m).astype(np.float64)
    s = 448.0 / np.abs(m).max()
    normal = np.abs(m.astype(np.float64) * s) >= 2.0**-6
    rel = np.abs(out - m)[normal] / np.abs(m.astype(np.float64))[normal]
    assert rel.max() <= 2.0**-3
    assert rel.max() <= 2.0**-4 * (1 + 1e-6)
