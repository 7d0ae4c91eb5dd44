"""Moment generating operators, factorial-moment ODEs and cumulants.

Two differential operators drive the moment generating functions of a
reaction system:

* ``D`` acts on the exponential moment generating function ``M(t; lam)``,
  one term ``r (exp(lam.(o-i)) - 1) prod_j sum_l s1(i_j, l) d^l/dlam_j^l``
  per reaction;
* ``d`` acts on the factorial moment generating function ``F(t; nu)``,
  one term ``r ((nu+1)^o - (nu+1)^i) d^i/dnu^i`` per reaction.

They are related by ``nu = exp(lam) - 1``; :func:`operators_consistent`
checks this on the exact representations.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.linalg

from .combinatorics import falling_factorial, stirling1, stirling2
from .polyseries import TruncatedSeries
from .reaction_model import ReactionSystem

__all__ = [
    "OperatorTerm",
    "OperatorRep",
    "build_egf_operator",
    "build_fmgf_operator",
    "egf_in_shifted_variable",
    "fmgf_in_shifted_variable",
    "operators_consistent",
    "phi",
    "MomentODE",
    "factorial_moment_system",
    "FirstOrderClosure",
    "first_order_closure",
    "factorial_moments",
    "cumulants_from_pgf",
    "MAX_CUMULANT_ORDER",
]

MAX_CUMULANT_ORDER = 3

Index = tuple[int, ...]


# ---------------------------------------------------------------- operators

@dataclass(frozen=True)
class OperatorTerm:
    """``scalar * prefactor * d^deriv``.

    The prefactor is either ``exp(lam . exp_shift) - 1`` (when ``exp_shift``
    is set) or the polynomial ``poly`` in ``nu`` (exponent tuple -> coefficient).
    """

    deriv: Index
    scalar: Fraction
    exp_shift: Index | None = None
    poly: tuple[tuple[Index, Fraction], ...] | None = None

    def poly_dict(self) -> dict[Index, Fraction]:
        return dict(self.poly or ())


@dataclass
class OperatorRep:
    """Sum of :class:`OperatorTerm` over a fixed number of variables."""

    nvars: int
    terms: list[OperatorTerm] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.terms)


def build_egf_operator(system: ReactionSystem) -> OperatorRep:
    """Operator ``D`` acting on the exponential moment generating function."""
    S = system.nspecies
    op = OperatorRep(S)
    for r in system.reactions:
        if r.rate == 0:
            continue
        shift = tuple(o - i for i, o in zip(r.inputs, r.outputs))
        if not any(shift):
            continue
        ranges = [range(i + 1) for i in r.inputs]
        for ks in itertools.product(*ranges):
            c = math.prod(stirling1(i, k) for i, k in zip(r.inputs, ks))
            if c:
                op.terms.append(OperatorTerm(tuple(ks), r.rate * c, exp_shift=shift))
    return op


def _shifted_power(exps: Index) -> dict[Index, Fraction]:
    """``(nu+1)^e`` expanded in powers of ``nu``."""
    out: dict[Index, Fraction] = {}
    for ks in itertools.product(*[range(e + 1) for e in exps]):
        out[ks] = out.get(ks, Fraction(0)) + math.prod(math.comb(e, k) for e, k in zip(exps, ks))
    return out


def build_fmgf_operator(system: ReactionSystem) -> OperatorRep:
    """Operator ``d`` acting on the factorial moment generating function."""
    S = system.nspecies
    op = OperatorRep(S)
    for r in system.reactions:
        if r.rate == 0:
            continue
        poly = _shifted_power(r.outputs)
        for k, v in _shifted_power(r.inputs).items():
            poly[k] = poly.get(k, Fraction(0)) - v
        poly = {k: v for k, v in poly.items() if v}
        if poly:
            op.terms.append(OperatorTerm(tuple(r.inputs), Fraction(r.rate),
                                         poly=tuple(sorted(poly.items()))))
    return op


# Operators in u = nu + 1: {deriv multi-index: {u-exponent multi-index: coeff}}
UOperator = dict[Index, dict[Index, Fraction]]


def _add_into(target: UOperator, deriv: Index, exps: Index, c: Fraction) -> None:
    if not c:
        return
    row = target.setdefault(deriv, {})
    row[exps] = row.get(exps, Fraction(0)) + c
    if not row[exps]:
        del row[exps]
        if not row:
            del target[deriv]


def _euler_power(S: int, j: int, ell: int) -> UOperator:
    """``(u_j d/du_j)^ell`` by repeated left composition."""
    zero = (0,) * S
    cur: UOperator = {zero: {zero: Fraction(1)}}
    for _ in range(ell):
        nxt: UOperator = {}
        for deriv, row in cur.items():
            for exps, c in row.items():
                # u d (u^a d^m) = a u^a d^m + u^{a+1} d^{m+1}
                _add_into(nxt, deriv, exps, c * exps[j])
                up = tuple(e + (q == j) for q, e in enumerate(exps))
                dp = tuple(d + (q == j) for q, d in enumerate(deriv))
                _add_into(nxt, dp, up, c)
        cur = nxt
    return cur


def _compose_uops(a: UOperator, b: UOperator) -> UOperator:
    """Product of operators acting on disjoint variables (they commute)."""
    out: UOperator = {}
    for d1, r1 in a.items():
        for d2, r2 in b.items():
            for e1, c1 in r1.items():
                for e2, c2 in r2.items():
                    _add_into(out, tuple(x + y for x, y in zip(d1, d2)),
                              tuple(x + y for x, y in zip(e1, e2)), c1 * c2)
    return out


def egf_in_shifted_variable(op: OperatorRep) -> UOperator:
    """Rewrite ``D`` under ``exp(lam) = u``, i.e. ``d/dlam = u d/du``.

    Exponents of ``u`` may be negative (Laurent terms from ``o < i``).
    """
    S = op.nvars
    zero = (0,) * S
    out: UOperator = {}
    for term in op.terms:
        if term.exp_shift is None:
            raise ValueError("not an exponential-prefactor operator")
        body: UOperator = {zero: {zero: Fraction(1)}}
        for j, ell in enumerate(term.deriv):
            body = _compose_uops(body, _euler_power(S, j, ell))
        for deriv, row in body.items():
            for exps, c in row.items():
                shifted = tuple(e + s for e, s in zip(exps, term.exp_shift))
                _add_into(out, deriv, shifted, term.scalar * c)
                _add_into(out, deriv, exps, -term.scalar * c)
    return out


def fmgf_in_shifted_variable(op: OperatorRep) -> UOperator:
    """Rewrite ``d`` with ``nu = u - 1`` (``d/dnu = d/du``)."""
    out: UOperator = {}
    for term in op.terms:
        for exps, c in term.poly_dict().items():
            # nu^e = (u - 1)^e
            for ks in itertools.product(*[range(e + 1) for e in exps]):
                sign = (-1) ** sum(e - k for e, k in zip(exps, ks))
                coef = math.prod(math.comb(e, k) for e, k in zip(exps, ks))
                _add_into(out, term.deriv, tuple(ks), term.scalar * c * sign * coef)
    return out


def operators_consistent(system: ReactionSystem) -> bool:
    """True when ``D`` and ``d`` agree exactly under ``nu = exp(lam) - 1``."""
    return (egf_in_shifted_variable(build_egf_operator(system))
            == fmgf_in_shifted_variable(build_fmgf_operator(system)))


# -------------------------------------------------------- factorial moments

def phi(k: Sequence[int], n: Sequence[int], i: Sequence[int], o: Sequence[int]) -> int:
    """``[(o)_k - (i)_k] * binom(n, k)`` with multi-index products."""
    ff_o = math.prod(falling_factorial(a, b) for a, b in zip(o, k))
    ff_i = math.prod(falling_factorial(a, b) for a, b in zip(i, k))
    return (ff_o - ff_i) * math.prod(math.comb(a, b) if b <= a else 0 for a, b in zip(n, k))


def _indices(S: int, lo: int, hi: int) -> list[Index]:
    return [idx for d in range(lo, hi + 1)
            for idx in itertools.product(range(d + 1), repeat=S) if sum(idx) == d]


@dataclass
class MomentODE:
    """``d f_n/dt = sum_m rows[n][m] f_m`` for ``1 <= |n| <= max_order``.

    ``f_0 = 1`` is the constant channel; any ``m`` with ``|m| > max_order``
    is an open dependency and makes the system non-closed.
    """

    nspecies: int
    max_order: int
    indices: list[Index]
    rows: dict[Index, dict[Index, Fraction]]

    @property
    def zero(self) -> Index:
        return (0,) * self.nspecies

    @property
    def open_dependencies(self) -> set[Index]:
        return {m for row in self.rows.values() for m in row if sum(m) > self.max_order}

    @property
    def closed(self) -> bool:
        return not self.open_dependencies

    def matrix(self) -> np.ndarray:
        pos = {idx: a for a, idx in enumerate(self.indices)}
        A = np.zeros((len(self.indices), len(self.indices)))
        for n, row in self.rows.items():
            for m, c in row.items():
                if m in pos:
                    A[pos[n], pos[m]] += float(c)
        return A

    def source(self) -> np.ndarray:
        return np.array([float(self.rows[n].get(self.zero, 0)) for n in self.indices])

    def solve(self, f0: Sequence[float], t: float) -> np.ndarray:
        """Factorial moments at ``t`` from initial values ordered as ``indices``."""
        if not self.closed:
            raise ValueError(f"moment system is not closed: depends on {sorted(self.open_dependencies)}")
        k = len(self.indices)
        aug = np.zeros((k + 1, k + 1))
        aug[:k, :k] = self.matrix()
        aug[:k, k] = self.source()
        y = scipy.linalg.expm(aug * t) @ np.append(np.asarray(f0, dtype=float), 1.0)
        return y[:k]


def factorial_moment_system(system: ReactionSystem, max_order: int) -> MomentODE:
    """Factorial-moment evolution equations up to total order ``max_order``."""
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    S = system.nspecies
    indices = _indices(S, 1, max_order)
    rows: dict[Index, dict[Index, Fraction]] = {}
    for n in indices:
        row: dict[Index, Fraction] = {}
        for r in system.reactions:
            if r.rate == 0:
                continue
            top = [min(a, max(i, o)) for a, i, o in zip(n, r.inputs, r.outputs)]
            for k in itertools.product(*[range(x + 1) for x in top]):
                c = phi(k, n, r.inputs, r.outputs)
                if c:
                    m = tuple(a + i - b for a, i, b in zip(n, r.inputs, k))
                    row[m] = row.get(m, Fraction(0)) + r.rate * c
        rows[n] = {m: c for m, c in row.items() if c}
    return MomentODE(S, max_order, indices, rows)


@dataclass
class FirstOrderClosure:
    """``d<n>/dt = matrix @ <n> + source`` when ``closed``."""

    closed: bool
    matrix: np.ndarray | None = None
    source: np.ndarray | None = None
    exact_matrix: list[list[Fraction]] | None = None
    exact_source: list[Fraction] | None = None

    def mean(self, m0: Sequence[float], t: float) -> np.ndarray:
        if not self.closed:
            raise ValueError("system has no first-order closure")
        S = len(self.source)
        aug = np.zeros((S + 1, S + 1))
        aug[:S, :S] = self.matrix
        aug[:S, S] = self.source
        return (scipy.linalg.expm(aug * t) @ np.append(np.asarray(m0, dtype=float), 1.0))[:S]


def first_order_closure(system: ReactionSystem) -> FirstOrderClosure:
    """Affine first-moment ODE if every reaction consumes at most one particle."""
    S = system.nspecies
    if any(r.rate > 0 and sum(r.inputs) > 1 for r in system.reactions):
        return FirstOrderClosure(False)
    mu = [[Fraction(0)] * S for _ in range(S)]
    src = [Fraction(0)] * S
    for r in system.reactions:
        if r.rate == 0:
            continue
        for a in range(S):
            d = r.rate * (r.outputs[a] - r.inputs[a])
            if sum(r.inputs) == 0:
                src[a] += d
            else:
                mu[a][r.inputs.index(1)] += d
    return FirstOrderClosure(True, np.array(mu, dtype=float).reshape(S, S),
                             np.array(src, dtype=float), mu, src)


# ---------------------------------------------------------------- cumulants

def _marginal(P, species: int) -> np.ndarray:
    coeffs = P.coeffs if isinstance(P, TruncatedSeries) else np.asarray(P)
    if coeffs.dtype == object:
        coeffs = coeffs.astype(float)
    if coeffs.ndim > 1:
        axes = tuple(a for a in range(coeffs.ndim) if a != species)
        coeffs = coeffs.sum(axis=axes)
    return np.asarray(coeffs, dtype=float)


def factorial_moments(P, order: int, species: int = 0) -> list[float]:
    """``f_k = d^k P/dx^k at x=1`` for ``k = 0..order``."""
    p = _marginal(P, species)
    n = np.arange(p.size, dtype=float)
    out = []
    ff = np.ones_like(n)
    for k in range(order + 1):
        out.append(float(ff @ p))
        ff = ff * (n - k)
    return out


def cumulants_from_pgf(P, order: int = 3, species: int = 0) -> list[float]:
    """First ``order`` cumulants of one species from a PGF (coefficients or series)."""
    if not 1 <= order <= MAX_CUMULANT_ORDER:
        raise ValueError(f"cumulant order must be 1..{MAX_CUMULANT_ORDER}")
    f = factorial_moments(P, order, species)
    if abs(f[0] - 1.0) > 1e-6:
        raise ValueError(f"PGF not normalized: total mass {f[0]:.3g}")
    # raw moments m_k = sum_l S2(k, l) f_l
    m = [sum(stirling2(k, l) * f[l] for l in range(k + 1)) for k in range(order + 1)]
    kappa = [0.0] * (order + 1)
    for k in range(1, order + 1):
        kappa[k] = m[k] - sum(math.comb(k - 1, j - 1) * kappa[j] * m[k - j] for j in range(1, k))
    return kappa[1:]
