from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seetrack.errors import ArgumentError, RangeError
from seetrack.quant import (
    DYADIC_REL_TOL,
    QuantParams,
    calibrate_scale,
    dequantize,
    dyadic_approx,
    quantize,
    requantize,
)

from oracles import round_half_up_real


def test_calibrate_scale():
    assert calibrate_scale([-1.27, 0.5], "weight") == pytest.approx(0.01)
    assert calibrate_scale([0.0, 0.0]) == 1.0
    with pytest.raises(ArgumentError):
        calibrate_scale([])


def test_calibrate_range_property(rng):
    for _ in range(50):
        v = rng.standard_normal(100) * rng.uniform(0.01, 100)
        s = calibrate_scale(v, "activation")
        assert 127 * s >= np.abs(v).max() * (1 - 1e-12)
        q = quantize(v, s)
        assert q.min() >= -128 and q.max() <= 127


def test_quantize_trivial():
    assert quantize(0.0, 0.1) == 0
    assert quantize(0.25 * 100, 0.25) == 100
    assert quantize(-0.5, 1.0) == -1  # half away from zero
    assert quantize(1e9, 1.0) == 127
    assert quantize(-1e9, 1.0) == -128


@given(st.floats(-127, 127), st.floats(1e-3, 10))
def test_quantize_round_trip_bound(u, s):
    v = u * s
    assert abs(dequantize(quantize(v, s), s) - v) <= s / 2 + 1e-9 * s


def test_dyadic_powers_of_two():
    assert dyadic_approx(0.5) == QuantParams(1 << 30, 31, 0.5)
    q = dyadic_approx(1.0)
    assert (q.m, q.n) == (1 << 30, 30)


def test_dyadic_point_three():
    q = dyadic_approx(0.3)
    assert q.m == round(0.3 * 2 ** q.n)
    assert abs(0.3 - q.m / 2 ** q.n) / 0.3 <= 2 ** -14


def test_dyadic_errors():
    with pytest.raises(ArgumentError):
        dyadic_approx(0.0)
    with pytest.raises(RangeError):
        dyadic_approx(2.0 ** 31)
    with pytest.raises(RangeError):
        dyadic_approx(1e-12)


@given(st.floats(1e-4, 1e2))
def test_dyadic_invariants(s):
    q = dyadic_approx(s)
    assert 0 < q.m < 2 ** 31 and 0 <= q.n <= 31
    assert abs(s - q.m / 2 ** q.n) / s <= DYADIC_REL_TOL
    # n is maximal: one more bit would overflow the multiplier (or n is already 31)
    assert q.n == 31 or round(s * 2 ** (q.n + 1)) >= 2 ** 31


def test_requantize_examples():
    half = dyadic_approx(0.5)
    assert requantize(100, half) == 50
    assert requantize(101, half) == 51
    assert requantize(10 ** 6, dyadic_approx(1.0)) == 127
    assert requantize(-10 ** 6, dyadic_approx(1.0)) == -128


def test_requantize_vectorised_matches_scalar(rng):
    q = dyadic_approx(0.0123)
    acc = rng.integers(-2 ** 20, 2 ** 20, 1000)
    vec = requantize(acc, q)
    assert vec.dtype == np.int8
    assert vec.tolist() == [requantize(int(a), q) for a in acc]


@given(st.integers(-2 ** 31, 2 ** 31 - 1), st.integers(1, 2 ** 31 - 1), st.integers(0, 31))
def test_requantize_exact_for_dyadic(acc, m, n):
    q = QuantParams(m, n, m / 2 ** n)
    assert requantize(acc, q) == round_half_up_real(acc, Fraction(m, 2 ** n))


def test_requantize_within_one_for_non_dyadic(rng):
    for s in rng.uniform(1e-4, 1.0, 200):
        q = dyadic_approx(float(s))
        for acc in rng.integers(-50_000, 50_000, 20):
            exact = round_half_up_real(int(acc), Fraction(float(s)))
            assert abs(requantize(int(acc), q) - exact) <= 1


def test_requantize_uses_no_floats():
    q = dyadic_approx(0.37)
    out = requantize(np.array([1, 2, 3], dtype=np.int32), q)
    assert np.issubdtype(out.dtype, np.integer)
