import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cme_exact.polyseries import (
    RationalPolynomial,
    SeriesError,
    TruncatedSeries,
    coefficient,
    compose,
    derivative,
    eval_at_one,
    exp_poly,
    exp_series,
    log_series,
    mul,
    pow_real,
    reciprocal,
)

X = TruncatedSeries.variable(0, 1, 30)


def pois(mu, deg):
    x = TruncatedSeries.variable(0, 1, deg)
    return exp_series((x - 1.0) * mu)


def test_mul_basic():
    x = TruncatedSeries.variable(0, 1, 2)
    assert np.allclose(mul(1.0 + x, 1.0 - x).coeffs, [1, 0, -1])
    a = pois(1.5, 10)
    assert np.array_equal(mul(a, TruncatedSeries.constant(1.0, 1, 10)).coeffs, a.coeffs)


def test_poisson_convolution():
    lhs = mul(pois(1.0, 12), pois(2.0, 12))
    expected = [math.exp(-3) * 3**n / math.factorial(n) for n in range(13)]
    assert np.allclose(lhs.coeffs, expected, rtol=1e-13, atol=0)


def test_exact_mode_mul():
    x = TruncatedSeries.variable(0, 1, 5, exact=True)
    s = (1 + x) ** 3
    assert [s.coefficient(k) for k in range(4)] == [1, 3, 3, 1]
    assert s.exact


def test_mode_and_shape_mismatch():
    a = TruncatedSeries.variable(0, 1, 5)
    with pytest.raises(SeriesError):
        mul(a, TruncatedSeries.variable(0, 1, 6))
    with pytest.raises(SeriesError):
        mul(a, TruncatedSeries.variable(0, 1, 5, exact=True))


def test_compose_examples():
    p = 0.3
    inner = (1 - p) + p * X
    out = compose(RationalPolynomial([0, 0, 1]), inner)
    assert np.allclose(out.coeffs[:3], [(1 - p) ** 2, 2 * p * (1 - p), p * p])
    assert np.allclose(compose(RationalPolynomial([1]), inner).coeffs[0], 1.0)
    # decay from |3>, tau t = 0.5
    e = math.exp(-0.5)
    out = compose({3: 1.0}, (1 - e) + e * X)
    for k in range(4):
        assert out.coefficient(k) == pytest.approx(math.comb(3, k) * e**k * (1 - e) ** (3 - k), abs=1e-15)


def test_compose_multivariate():
    x = TruncatedSeries.variable(0, 2, 6)
    y = TruncatedSeries.variable(1, 2, 6)
    out = compose({(1, 1): 1.0}, [x + y, x * 2.0])
    # (x + y) * 2x = 2x^2 + 2xy
    assert out.coefficient((2, 0)) == 2.0
    assert out.coefficient((1, 1)) == 2.0


def test_pow_real_geom2():
    p, mu = 0.5, 1.5
    deg = 8
    x = TruncatedSeries.variable(0, 1, deg)
    geom2 = reciprocal(1.0 - (1 - p) * x) * p
    out = pow_real(geom2, mu)
    # (p / (1 - (1-p) x))^mu: coefficient p^mu binom(n+mu-1, n) (1-p)^n
    for n in range(deg + 1):
        c = p**mu * math.gamma(n + mu) / (math.gamma(mu) * math.factorial(n)) * (1 - p) ** n
        assert out.coefficient(n) == pytest.approx(c, rel=1e-13)
    via_log = exp_series(log_series(geom2) * mu)
    assert np.allclose(out.coeffs, via_log.coeffs, rtol=1e-12, atol=0)
    assert np.allclose(pow_real(geom2, 0).coeffs, TruncatedSeries.constant(1.0, 1, deg).coeffs)
    assert pow_real(geom2, 2).coefficient(1) == pytest.approx(0.25)


def test_pow_real_requires_constant_term():
    with pytest.raises(SeriesError):
        pow_real(X, 0.5)


def test_exp_poly():
    assert exp_poly(RationalPolynomial([0]), 1, 10).coefficient(0) == 1
    s = exp_poly(RationalPolynomial([-2, 2]), 1, 12)
    for n in range(11):
        assert s.coefficient(n) == pytest.approx(math.exp(-2) * 2**n / math.factorial(n), rel=1e-13)
    even = exp_poly(RationalPolynomial([-0.7, 0, 0.7]), 1, 20)
    assert np.all(even.coeffs[1::2] == 0)


def test_plumbing():
    b = 0.3 + 0.7 * X
    assert eval_at_one(b) == pytest.approx(1.0)
    assert coefficient(pois(2.0, 10), 3) == pytest.approx(math.exp(-2) * 8 / 6)
    d = derivative(TruncatedSeries.variable(0, 1, 5, exact=True) ** 3)
    assert [d.coefficient(k) for k in range(4)] == [0, 0, 3, 0]
    with pytest.raises(SeriesError):
        b.coefficient(31)


def test_truncation_consistency():
    for deg in (10, 25):
        lo = pow_real(reciprocal(1.0 - 0.4 * TruncatedSeries.variable(0, 1, deg)), 2.5)
        hi = pow_real(reciprocal(1.0 - 0.4 * TruncatedSeries.variable(0, 1, deg + 10)), 2.5)
        assert np.allclose(lo.coeffs, hi.coeffs[:deg + 1], rtol=1e-13, atol=0)
    xe = TruncatedSeries.variable(0, 1, 8, exact=True)
    xe2 = TruncatedSeries.variable(0, 1, 18, exact=True)
    a = reciprocal(1 - xe * Fraction(1, 3)) * (1 + xe) ** 4
    b = reciprocal(1 - xe2 * Fraction(1, 3)) * (1 + xe2) ** 4
    assert all(a.coefficient(k) == b.coefficient(k) for k in range(9))


def test_multivariate_total_degree_mask():
    x = TruncatedSeries.variable(0, 2, 4)
    y = TruncatedSeries.variable(1, 2, 4)
    s = (x + y) ** 5
    assert np.all(s.coeffs == 0)
    e = exp_series((x * y - 1.0) * 0.5 + 0.5)
    assert e.coefficient((2, 2)) == pytest.approx(0.5**2 / 2)
    with pytest.raises(SeriesError):
        e.coefficient((3, 2))


small_fracs = st.fractions(min_value=-3, max_value=3, max_denominator=7)


@settings(max_examples=40, deadline=None)
@given(st.lists(small_fracs, min_size=1, max_size=6), st.lists(small_fracs, min_size=1, max_size=6),
       st.lists(small_fracs, min_size=1, max_size=6))
def test_mul_commutative_associative_exact(a, b, c):
    def series(cs):
        return TruncatedSeries.from_polynomial(RationalPolynomial(cs), 8, exact=True)
    A, B, C = series(a), series(b), series(c)
    assert A * B == B * A
    assert (A * B) * C == A * (B * C)


@settings(max_examples=40, deadline=None)
@given(st.lists(small_fracs, min_size=1, max_size=5), st.lists(small_fracs, min_size=1, max_size=5))
def test_rational_polynomial_ring(a, b):
    p, q = RationalPolynomial(a), RationalPolynomial(b)
    x = Fraction(2, 3)
    assert (p * q)(x) == p(x) * q(x)
    assert (p + q)(x) == p(x) + q(x)
    assert p.compose(q)(x) == p(q(x))
    assert p.affine(Fraction(1, 2), 3)(x) == p(Fraction(1, 2) + 3 * x)
    assert p.shift(1)(x) == p(x + 1)


def test_rational_polynomial_trim_and_degree():
    assert RationalPolynomial([1, 0, 0]).degree == 0
    assert RationalPolynomial().degree == -1
    assert RationalPolynomial([0, 0, 3]).derivative() == RationalPolynomial([0, 6])
