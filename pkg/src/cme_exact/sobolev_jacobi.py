"""Spectral solver for one species with decay, pair annihilation and pair coalescence.

For ``A -> 0`` (rate r_d), ``2A -> 0`` (rate r_k) and ``2A -> A`` (rate r_l)
the PGF from ``x^M`` expands in a finite set of polynomial eigenfunctions.
These are Sobolev-orthogonal polynomials of Jacobi type with parameters
``(-1, beta)``, ``beta = r_d / (r_k + r_l) - 1``, evaluated at the shifted
argument ``(x - a) / (1 - a)`` with ``a = r_l / (2 (r_k + r_l))``.

Basis polynomials, norms and expansion coefficients are exact rationals.
Only the time weights ``exp(-lambda_n t)`` are inexact; they are applied in
extended precision because the expansion coefficients alternate in sign
and grow quickly with ``M``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Union

import mpmath
import numpy as np

from .combinatorics import binomial, rising_factorial
from .polyseries import RationalPolynomial, TruncatedSeries

__all__ = [
    "SobolevValue",
    "SJBasis",
    "BinarySolution",
    "sj_polynomial",
    "sj_basis",
    "sobolev_inner",
    "sj_norm",
    "hyp2f1_terminating",
    "coeff_B",
    "coeff_A",
    "expand_in_basis",
    "binary_hamiltonian",
    "eigencheck",
    "binary_solution",
    "solve_binary",
    "as_rational",
]

Number = Union[int, float, Fraction]


def as_rational(v: Number) -> Fraction:
    """Exact rational from user input; floats go through their shortest repr."""
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ValueError(f"non-finite value {v}")
        return Fraction(repr(v))
    return Fraction(v)


def _check_beta(beta: Fraction) -> Fraction:
    beta = as_rational(beta)
    if beta < -1:
        raise ValueError(f"beta must be >= -1, got {beta}")
    return beta


@dataclass(frozen=True)
class SobolevValue:
    """Exact number of the form ``rational + surd * 2**(beta + 1)``.

    Sobolev inner products with weight ``(x+1)**(beta+1)`` produce this form;
    for integer ``beta`` the surd part is folded into the rational part.
    """

    rational: Fraction
    surd: Fraction
    beta: Fraction

    @classmethod
    def make(cls, rational, surd, beta) -> "SobolevValue":
        rational, surd, beta = Fraction(rational), Fraction(surd), Fraction(beta)
        if beta.denominator == 1 and surd != 0:
            rational += surd * Fraction(2) ** int(beta + 1)
            surd = Fraction(0)
        return cls(rational, surd, beta)

    def is_rational(self) -> bool:
        return self.surd == 0

    def as_fraction(self) -> Fraction:
        if self.surd != 0:
            raise ValueError(f"{self} is irrational")
        return self.rational

    def __float__(self) -> float:
        return float(self.rational) + float(self.surd) * 2.0 ** float(self.beta + 1)

    def __add__(self, other: "SobolevValue") -> "SobolevValue":
        if not isinstance(other, SobolevValue):
            return SobolevValue.make(self.rational + Fraction(other), self.surd, self.beta)
        if other.beta != self.beta:
            raise ValueError("cannot mix different beta")
        return SobolevValue.make(self.rational + other.rational, self.surd + other.surd, self.beta)

    def __eq__(self, other) -> bool:
        if isinstance(other, SobolevValue):
            return (self.rational, self.surd) == (other.rational, other.surd)
        if isinstance(other, (int, Fraction)):
            return self.surd == 0 and self.rational == other
        return NotImplemented

    def __hash__(self):
        return hash((self.rational, self.surd))

    def is_zero(self) -> bool:
        return self.rational == 0 and self.surd == 0

    def ratio(self, other: "SobolevValue") -> Fraction:
        """Exact quotient when both values are of the same kind."""
        if other.is_zero():
            raise ZeroDivisionError("ratio by zero")
        if self.is_zero():
            return Fraction(0)
        if self.surd == 0 and other.surd == 0:
            return self.rational / other.rational
        if self.rational == 0 and other.rational == 0:
            return self.surd / other.surd
        # general case is rational only if proportional
        if other.rational != 0 and other.surd != 0:
            q = self.rational / other.rational
            if self.surd == q * other.surd:
                return q
        raise ValueError("quotient is not rational")

    def __repr__(self) -> str:
        if self.surd == 0:
            return f"SobolevValue({self.rational})"
        return f"SobolevValue({self.rational} + {self.surd}*2^({self.beta + 1}))"


# ---------------------------------------------------------------- polynomials

_X = RationalPolynomial.x()
_XM1 = RationalPolynomial([-1, 1])


def _from_pair_sum(weights: dict, n: int) -> RationalPolynomial:
    """``sum_k w_k (x-1)^(n-k) (x+1)^k`` in O(n^2) coefficient operations.

    With ``y = x + 1`` each term is ``(y-2)^(n-k) y^k``, whose ``y^m``
    coefficient is ``binom(n-k, m-k) (-2)^(n-m)``; then ``y^m`` is expanded
    in powers of ``x``.
    """
    in_y = []
    for m in range(n + 1):
        s = sum(w * math.comb(n - k, m - k) for k, w in weights.items() if k <= m)
        in_y.append(s * (-2) ** (n - m))
    in_x = [sum(in_y[m] * math.comb(m, i) for m in range(i, n + 1))
            for i in range(n + 1)]
    return RationalPolynomial(in_x)


@lru_cache(maxsize=None)
def _sj_cached(beta: Fraction, n: int) -> RationalPolynomial:
    if n == 0:
        return RationalPolynomial([1])
    if beta == -1:
        if n == 1:
            return _X
        weights = {k: math.comb(n - 1, k) * math.comb(n - 1, n - k) for k in range(1, n)}
        return _from_pair_sum(weights, n) / math.comb(2 * n - 2, n)
    if n == 1:
        return _XM1
    weights = {k: math.comb(n - 1, k) * binomial(n + beta, n - k) for k in range(n + 1)}
    return _from_pair_sum(weights, n) / binomial(2 * n + beta - 1, n)


def sj_polynomial(beta: Number, n: int) -> RationalPolynomial:
    """Monic Sobolev-Jacobi polynomial of degree ``n`` with parameters ``(-1, beta)``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return _sj_cached(_check_beta(beta), int(n))


def _expand_about_minus_one(p: RationalPolynomial) -> list[Fraction]:
    """Coefficients of ``p`` in powers of ``(x + 1)``."""
    return list(p.shift(-1).coeffs)


def sobolev_inner(p: RationalPolynomial, q: RationalPolynomial, beta: Number) -> SobolevValue:
    """Sobolev inner product for the given ``beta``.

    ``beta = -1``: ``p(1)q(1) + p(-1)q(-1) + int_{-1}^{1} p'q' dx``.
    ``beta > -1``: ``p(1)q(1) + int_{-1}^{1} (x+1)^(beta+1) p'q' dx``.
    Integrals are exact: ``int (x+1)^(s) dx = 2^(s+1)/(s+1)`` over [-1, 1].
    """
    beta = _check_beta(beta)
    boundary = p(Fraction(1)) * q(Fraction(1))
    if beta == -1:
        boundary += p(Fraction(-1)) * q(Fraction(-1))
    integrand = _expand_about_minus_one(p.derivative() * q.derivative())
    # int (x+1)^(beta+1+j) = 2^(beta+1) * 2^(j+1) / (beta+2+j)
    surd = sum((c * Fraction(2 ** (j + 1)) / (beta + 2 + j) for j, c in enumerate(integrand)),
               Fraction(0))
    return SobolevValue.make(boundary, surd, beta)


def sj_norm(beta: Number, n: int) -> SobolevValue:
    """Closed-form squared Sobolev norm of ``sj_polynomial(beta, n)``."""
    beta = _check_beta(beta)
    if n < 0:
        raise ValueError("n must be nonnegative")
    if beta == -1:
        if n == 0:
            return SobolevValue.make(2, 0, beta)
        if n == 1:
            return SobolevValue.make(4, 0, beta)
        m = n - 1
        K = Fraction(2 ** (2 * m + 1) * math.factorial(m) ** 4,
                     math.factorial(2 * m) * math.factorial(2 * m + 1))
        return SobolevValue.make(n * n * K, 0, beta)
    if n == 0:
        return SobolevValue.make(1, 0, beta)
    # 2^(beta+1) * 2^(2n-1) n^2 ((n-1)!)^2 / ((n+beta+1)_{n-1} (n+beta+1)_n)
    num = Fraction(2 ** (2 * n - 1) * n * n * math.factorial(n - 1) ** 2)
    den = rising_factorial(n + beta + 1, n - 1) * rising_factorial(n + beta + 1, n)
    return SobolevValue.make(0, num / den, beta)


@dataclass
class SJBasis:
    """First ``n_max + 1`` basis polynomials for one ``beta`` with their norms."""

    beta: Fraction
    polys: list[RationalPolynomial]
    norms: list[SobolevValue]

    @property
    def n_max(self) -> int:
        return len(self.polys) - 1


_basis_lock = threading.Lock()


def sj_basis(beta: Number, n_max: int) -> SJBasis:
    beta = _check_beta(beta)
    with _basis_lock:
        polys = [_sj_cached(beta, n) for n in range(n_max + 1)]
    return SJBasis(beta, polys, [sj_norm(beta, n) for n in range(n_max + 1)])


# ------------------------------------------------------------- coefficients

def hyp2f1_terminating(a: int, b: Number, c: Number, z: Number) -> Fraction:
    """Exact ``2F1(a, b; c; z)`` for a nonpositive integer ``a``.

    The series stops after ``-a + 1`` terms.  A vanishing ``c + j`` before
    termination raises :class:`ZeroDivisionError`.
    """
    if int(a) != a or a > 0:
        raise ValueError(f"upper parameter must be a nonpositive integer, got {a}")
    m = -int(a)
    b, c, z = as_rational(b), as_rational(c), as_rational(z)
    total = Fraction(0)
    term = Fraction(1)
    for j in range(m + 1):
        total += term
        if j == m:
            break
        if c + j == 0:
            raise ZeroDivisionError(f"pole at c + {j} = 0 before termination")
        term = term * (j - m) * (b + j) * z / ((c + j) * (j + 1))
    return total


def _coeff_B_minus_one(M: int, n: int) -> Fraction:
    if n > M or (M + n) % 2:
        return Fraction(0)
    f = math.factorial
    return Fraction(math.comb(2 * n, n) * f(M) * f((M + n) // 2), f(M + n) * f((M - n) // 2))


def _coeff_B_general(M: int, n: int, beta: Fraction) -> Fraction:
    if n > M:
        return Fraction(0)
    if n == 0:
        return Fraction(1)
    # Gamma(2n+beta+1) / Gamma(n+beta+2) = (n+beta+2)_{n-1}
    pre = M * rising_factorial(n + beta + 2, n - 1) / (2 ** (n - 1) * math.factorial(n))
    s = Fraction(0)
    for k in range(n):
        sign = -1 if (n - 1 - k) % 2 else 1
        s += sign * math.comb(n - 1, k) * hyp2f1_terminating(1 - M, n - k, beta + n + 2, 2)
    return pre * s


def coeff_B(M: int, n: int, beta: Number) -> Fraction:
    """Coefficient of ``sj_polynomial(beta, n)`` in the expansion of ``x^M``."""
    beta = _check_beta(beta)
    if M < 0 or n < 0:
        raise ValueError("M and n must be nonnegative")
    if beta == -1:
        return _coeff_B_minus_one(M, n)
    return _coeff_B_general(M, n, beta)


def expand_in_basis(p: RationalPolynomial, basis: list[RationalPolynomial]) -> list[Fraction]:
    """Coefficients ``c`` with ``p = sum c_n basis[n]`` by back-substitution.

    ``basis[n]`` must have degree ``n``; extra trailing entries are zero.
    """
    if p.degree >= len(basis):
        raise ValueError("basis too short for polynomial degree")
    rest = list(p.coeffs)
    out = [Fraction(0)] * len(basis)
    for n in range(p.degree, -1, -1):
        lead = basis[n][n]
        c = rest[n] / lead
        out[n] = c
        if c:
            for k, b in enumerate(basis[n].coeffs):
                rest[k] -= c * b
    return out


@lru_cache(maxsize=64)
def _B_table(beta: Fraction, M: int) -> tuple[tuple[Fraction, ...], ...]:
    """``B[P][n]`` for ``P <= M``.

    The alternating hypergeometric form costs O(M^4) for beta > -1, so that
    branch expands the monomials by back-substitution instead.  Both routes
    give identical rationals; the tests check this for small M.
    """
    if beta == -1:
        return tuple(tuple(_coeff_B_minus_one(P, n) for n in range(M + 1)) for P in range(M + 1))
    basis = [_sj_cached(beta, n) for n in range(M + 1)]
    return tuple(tuple(expand_in_basis(RationalPolynomial.monomial(P), basis))
                 for P in range(M + 1))


def coeff_A(M: int, n: int, rbar_d: Number, rbar_l: Number) -> Fraction:
    """Coefficient of the shifted basis polynomial in the expansion of ``x^M``.

    ``sum_{P=n}^{M} binom(M,P) (rbar_l/2)^(M-P) (1-rbar_l/2)^P B^{P,n}`` with
    ``beta = rbar_d - 1``.
    """
    rbar_d, rbar_l = as_rational(rbar_d), as_rational(rbar_l)
    if not 0 <= rbar_l <= 1:
        raise ValueError("rbar_l must lie in [0, 1]")
    if n > M:
        return Fraction(0)
    beta = _check_beta(rbar_d - 1)
    table = _B_table(beta, M)
    a = rbar_l / 2
    return sum((math.comb(M, P) * a ** (M - P) * (1 - a) ** P * table[P][n] for P in range(n, M + 1)),
               Fraction(0))


def _shifted(p: RationalPolynomial, rbar_l: Fraction) -> RationalPolynomial:
    """``p((x - a) / (1 - a))`` with ``a = rbar_l / 2``."""
    a = rbar_l / 2
    return p.affine(-a / (1 - a), 1 / (1 - a))


# ---------------------------------------------------------------- operators

def binary_hamiltonian(r_d: Number, r_k: Number, r_l: Number, p: RationalPolynomial) -> RationalPolynomial:
    """``r_d (1-x) p' + r_k (1-x^2) p'' + r_l (x-x^2) p''``."""
    r_d, r_k, r_l = as_rational(r_d), as_rational(r_k), as_rational(r_l)
    d1 = p.derivative()
    d2 = d1.derivative()
    return (RationalPolynomial([r_d, -r_d]) * d1
            + RationalPolynomial([r_k, 0, -r_k]) * d2
            + RationalPolynomial([0, r_l, -r_l]) * d2)


def eigencheck(r_d: Number, r_k: Number, r_l: Number, n: int) -> RationalPolynomial:
    """Residual ``(H + lambda_n) Q_n``; zero when ``Q_n`` is an exact eigenfunction."""
    r_d, r_k, r_l = as_rational(r_d), as_rational(r_k), as_rational(r_l)
    sigma = r_k + r_l
    if sigma <= 0:
        raise ValueError("need r_k + r_l > 0")
    q = _shifted(sj_polynomial(r_d / sigma - 1, n), r_l / sigma)
    lam = n * ((n - 1) * sigma + r_d)
    return binary_hamiltonian(r_d, r_k, r_l, q) + q * lam


# ----------------------------------------------------------------- solution

@dataclass
class BinarySolution:
    """Exact spectral data of the PGF started from ``x^M``.

    ``terms[n]`` is the exact polynomial ``A^{M,n} Q_n(x)`` and
    ``eigenrates[n]`` its decay rate, so ``P(t;x) = sum_n e^{-lambda_n t} terms[n]``.
    When ``sigma == 0`` the solution is the binomial law and ``terms`` is empty.
    """

    M: int
    r_d: Fraction
    sigma: Fraction
    rbar_d: Fraction | None
    rbar_l: Fraction | None
    A_coeffs: list[Fraction]
    eigenrates: list[Fraction]
    terms: list[RationalPolynomial] = field(repr=False)

    def pgf_coefficients(self, t: float) -> np.ndarray:
        """Probabilities ``p_0..p_M`` at time ``t``."""
        if t < 0:
            raise ValueError("t must be nonnegative")
        M = self.M
        if self.sigma == 0:
            q = math.exp(-float(self.r_d) * t)
            return np.array([math.comb(M, k) * q ** k * (1 - q) ** (M - k) for k in range(M + 1)])
        bits = 0
        for poly in self.terms:
            for c in poly.coeffs:
                if c:
                    bits = max(bits, abs(c.numerator).bit_length() - c.denominator.bit_length() + 1)
        with mpmath.workprec(bits + 96):
            acc = [mpmath.mpf(0)] * (M + 1)
            for lam, poly in zip(self.eigenrates, self.terms):
                w = mpmath.exp(-mpmath.mpf(lam.numerator) / lam.denominator * mpmath.mpf(t))
                for k, c in enumerate(poly.coeffs):
                    if c:
                        acc[k] += w * mpmath.mpf(c.numerator) / c.denominator
            return np.array([float(v) for v in acc])

    def series(self, t: float, max_deg: int | None = None) -> TruncatedSeries:
        p = self.pgf_coefficients(t)
        deg = self.M if max_deg is None else max_deg
        out = np.zeros(deg + 1)
        out[:min(deg, self.M) + 1] = p[:deg + 1]
        return TruncatedSeries(out, deg)


def binary_solution(r_d: Number, r_k: Number, r_l: Number, M: int) -> BinarySolution:
    """Exact eigen-expansion for the binary system started from ``M`` particles."""
    return _binary_solution(as_rational(r_d), as_rational(r_k), as_rational(r_l), int(M))


@lru_cache(maxsize=16)
def _binary_solution(r_d: Fraction, r_k: Fraction, r_l: Fraction, M: int) -> BinarySolution:
    if min(r_d, r_k, r_l) < 0:
        raise ValueError("rates must be nonnegative")
    if M < 0:
        raise ValueError("M must be nonnegative")
    sigma = r_k + r_l
    if sigma == 0:
        return BinarySolution(M, r_d, sigma, None, None, [], [], [])
    rbar_d, rbar_l = r_d / sigma, r_l / sigma
    beta = rbar_d - 1
    A = [coeff_A(M, n, rbar_d, rbar_l) for n in range(M + 1)]
    rates = [n * ((n - 1) * sigma + r_d) for n in range(M + 1)]
    terms = [_shifted(sj_polynomial(beta, n), rbar_l) * A[n] if A[n] else RationalPolynomial()
             for n in range(M + 1)]
    return BinarySolution(M, r_d, sigma, rbar_d, rbar_l, A, rates, terms)


def solve_binary(r_d: Number, r_k: Number, r_l: Number, M: int, t: float,
                 max_deg: int | None = None) -> TruncatedSeries:
    """PGF at time ``t`` of ``A->0``, ``2A->0``, ``2A->A`` started from ``x^M``."""
    return binary_solution(r_d, r_k, r_l, M).series(t, max_deg)
