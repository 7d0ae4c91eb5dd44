"""Closed-form PGFs for semi-linear (non-binary) reaction systems.

A single reaction consuming at most one particle evolves a PGF as
``P(t; x) = g(t; x) * P(0; T(t; x))``, where both ``g`` and every component
of ``T`` are themselves PGFs built from Poisson, Bernoulli and geometric laws.
For one species with birth, pair creation, death and autocatalysis combined,
:func:`composite_one_species` assembles the exact solution from the same
building blocks, in four parameter regimes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence, Union

import numpy as np

from .polyseries import (
    DEFAULT_MAX_DEG,
    RationalPolynomial,
    SeriesError,
    TruncatedSeries,
    compose,
    exp_series,
    pow_real,
    reciprocal,
)
from .reaction_model import Reaction, ReactionSystem, SystemClass, classify

__all__ = [
    "pois",
    "bern",
    "geom",
    "geom2",
    "a2pois",
    "ElementarySolution",
    "elementary_solution",
    "apply_solution",
    "composite_one_species",
    "composite_rates",
    "semigroup_check",
    "solve_semilinear",
    "initial_pgf",
]

log = logging.getLogger(__name__)

Series = TruncatedSeries
InitialPGF = Union[RationalPolynomial, Mapping, TruncatedSeries, int]

NEAR_EQUAL_RTOL = 1e-9


# ---------------------------------------------------------------------
# standard PGFs evaluated at a series argument y


def pois(mu: float, y: Series) -> Series:
    """Poisson PGF e^{mu (y - 1)}."""
    if mu < 0:
        raise ValueError("Poisson parameter must be >= 0")
    return exp_series((y - 1) * float(mu))


def a2pois(mu: float, y: Series) -> Series:
    """2-aerated Poisson PGF e^{mu (y^2 - 1)}."""
    if mu < 0:
        raise ValueError("parameter must be >= 0")
    return exp_series((y * y - 1) * float(mu))


def bern(p: float, y: Series) -> Series:
    """Bernoulli PGF (1 - p) + p y."""
    if not 0 <= p <= 1:
        raise ValueError("Bernoulli parameter must lie in [0, 1]")
    return y * float(p) + (1.0 - float(p))


def geom(p: float, y: Series) -> Series:
    """Geometric PGF (support >= 1) y p / (1 - y (1 - p))."""
    if not 0 < p <= 1:
        raise ValueError("geometric parameter must lie in (0, 1]")
    return y * float(p) * reciprocal(1.0 - y * (1.0 - float(p)))


def geom2(p: float, y: Series) -> Series:
    """Geometric PGF (support >= 0) p / (1 - y (1 - p))."""
    if not 0 < p <= 1:
        raise ValueError("geometric parameter must lie in (0, 1]")
    return reciprocal(1.0 - y * (1.0 - float(p))) * float(p)


# ---------------------------------------------------------------------
# single reactions


@dataclass
class ElementarySolution:
    """Prefactor PGF ``g`` and substitution map ``T`` (one series per species)."""

    g: Series
    T: list[Series]
    reaction: Reaction
    t: float

    def residuals(self) -> dict:
        return {
            "g(1)": abs(self.g.eval_at_one() - 1.0),
            "T(1)": max((abs(Ti.eval_at_one() - 1.0) for Ti in self.T), default=0.0),
        }


def _variables(nvars: int, max_deg: int) -> list[Series]:
    return [TruncatedSeries.variable(i, nvars, max_deg) for i in range(nvars)]


def _monomial(args: Sequence[Series], powers: Sequence[int]) -> Series:
    ref = args[0]
    out = TruncatedSeries.constant(1.0, ref.nvars, ref.max_deg)
    for a, k in zip(args, powers):
        if k:
            out = out * (a ** k)
    return out


def elementary_solution(reaction: Reaction, t: float, max_deg: int = DEFAULT_MAX_DEG,
                        at: Sequence[Series] | None = None) -> ElementarySolution:
    """``(g, T)`` for one non-binary reaction after time ``t``.

    ``at`` substitutes series for the formal variables (default: the
    variables themselves), which is what the semigroup identities need.
    """
    if not reaction.is_semilinear():
        raise ValueError(f"reaction consumes {reaction.order} particles; only non-binary reactions have "
                         "closed-form semigroup solutions")
    if t < 0:
        raise ValueError("t must be >= 0")
    S = reaction.nspecies
    args = list(at) if at is not None else _variables(S, max_deg)
    if len(args) != S:
        raise SeriesError(f"{len(args)} arguments for a {S}-species reaction")
    a = float(reaction.rate)
    ref = args[0]
    one = TruncatedSeries.constant(1.0, ref.nvars, ref.max_deg)
    T = list(args)
    if reaction.order == 0:
        # creation of o: g = exp(a t (x^o - 1))
        g = exp_series((_monomial(args, reaction.outputs) - 1.0) * (a * t))
        return ElementarySolution(g, T, reaction, t)
    i = reaction.inputs.index(1)
    k = reaction.outputs[i]
    others = list(reaction.outputs)
    others[i] = 0
    c = _monomial(args, others)
    xi = args[i]
    decay = math.exp(-a * t)
    if k == 0:
        # S_i -> products not containing S_i
        T[i] = xi * decay + c * (1.0 - decay)
    elif k == 1:
        # S_i -> S_i + products: T_i = x_i exp(a t (c - 1))
        T[i] = xi * exp_series((c - 1.0) * (a * t))
    else:
        # S_i -> k S_i + products: dT/dt = a (c T^k - T)
        w = 1.0 - c * (xi ** (k - 1)) * (-math.expm1(-(k - 1) * a * t))
        if k == 2:
            T[i] = xi * decay * reciprocal(w)
        else:
            T[i] = xi * decay * reciprocal(pow_real(w, 1.0 / (k - 1)))
    return ElementarySolution(one, T, reaction, t)


def initial_pgf(P0: InitialPGF, nvars: int = 1):
    """Normalize an initial PGF to a polynomial ``{multi_index: coefficient}`` map."""
    if isinstance(P0, int):
        if nvars != 1:
            raise ValueError("an integer initial state needs a single species")
        return {(P0,): 1.0}
    if isinstance(P0, ReactionSystem):
        return dict(P0.initial)
    if isinstance(P0, RationalPolynomial):
        return {(k,): c for k, c in enumerate(P0.coeffs) if c != 0}
    if isinstance(P0, TruncatedSeries):
        return {idx: v for idx, v in np.ndenumerate(P0.coeffs) if v != 0}
    out = {}
    for key, v in dict(P0).items():
        out[(key,) if isinstance(key, int) else tuple(key)] = v
    return out


def apply_solution(sol: ElementarySolution, P0: InitialPGF) -> Series:
    """``g * P0(T)`` for a polynomial initial PGF."""
    terms = initial_pgf(P0, len(sol.T))
    for idx, c in terms.items():
        if float(c) < 0:
            raise ValueError("initial PGF has a negative coefficient")
    total = sum(float(c) for c in terms.values())
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"initial PGF sums to {total}, not 1")
    return sol.g * compose({k: float(v) for k, v in terms.items()}, sol.T)


def semigroup_check(reaction: Reaction, lam: float, mu: float, max_deg: int = 40) -> dict:
    """Residuals of T(l+m; x) = T(m; T(l; x)) and g(l+m; x) = g(l; x) g(m; T(l; x))."""
    full = elementary_solution(reaction, lam + mu, max_deg)
    first = elementary_solution(reaction, lam, max_deg)
    second = elementary_solution(reaction, mu, max_deg, at=first.T)
    t_res = max(float(np.max(np.abs((a - b).coeffs))) for a, b in zip(full.T, second.T))
    g_res = float(np.max(np.abs((full.g - first.g * second.g).coeffs)))
    return {"T": t_res, "g": g_res, "max": max(t_res, g_res)}


# ---------------------------------------------------------------------
# one species, all four non-binary reactions


def composite_one_species(alpha: float, beta: float, gamma: float, tau: float, t: float,
                          P0: InitialPGF, max_deg: int = DEFAULT_MAX_DEG) -> Series:
    """PGF of ``0->S (beta), 0->2S (gamma), S->0 (tau), S->2S (alpha)`` at time ``t``.

    ``P(t;x) = g_BDA(t;x) g_CDA(t;x) P0(T_DA(t;x))`` with the regime chosen
    by exact comparison of ``alpha`` and ``tau``.
    """
    alpha, beta, gamma, tau, t = (float(v) for v in (alpha, beta, gamma, tau, t))
    if min(alpha, beta, gamma, tau) < 0:
        raise ValueError("rates must be nonnegative")
    if t < 0:
        raise ValueError("t must be >= 0")
    x = TruncatedSeries.variable(0, 1, max_deg)
    if alpha == 0 and tau == 0:
        T = x
        g = pois(beta * t, x) * a2pois(gamma * t, x)
    elif alpha == tau:
        # s(t) = ln(1 + alpha t)/alpha, so e^{-alpha s} = 1/(1 + alpha t)
        p = 1.0 / (1.0 + alpha * t)
        T = bern(p, geom(p, x))
        G = geom2(p, x)
        g = pow_real(G, beta / alpha) * pow_real(G, 2.0 * gamma / alpha) \
            * exp_series((x - 1.0) * (x - 1.0) * G * (gamma * t))
    elif alpha > 0:
        if abs(alpha - tau) / max(alpha, tau) < NEAR_EQUAL_RTOL:
            log.warning("alpha=%r and tau=%r nearly equal; the alpha != tau formulas lose precision",
                        alpha, tau)
        d = alpha - tau
        em1 = math.expm1(d * t)  # E - 1 with E = e^{(alpha - tau) t}
        p_a = d / (alpha * em1 + d)  # e^{-alpha s_A(t)}
        p_d = d / (d - tau * math.expm1(-d * t)) if tau > 0 else 1.0  # e^{-tau s_D(t)}
        T = bern(p_d, geom(p_a, x))
        G = geom2(p_a, x)
        u = x - 1.0
        f = (u * u + u * (1.0 - tau / alpha)) * (gamma * em1 / d)
        g = pow_real(G, beta / alpha) * pow_real(G, gamma * (alpha + tau) / alpha ** 2) \
            * exp_series(f * G)
    else:
        e = math.exp(-tau * t)
        one_minus = -math.expm1(-tau * t)
        T = bern(e, x)
        g = pois(beta / tau * one_minus, x) * pois(gamma / tau * one_minus ** 2, x) \
            * a2pois(gamma / (2.0 * tau) * (-math.expm1(-2.0 * tau * t)), x)
    terms = initial_pgf(P0, 1)
    poly = {k: float(v) for k, v in terms.items()}
    return g * compose(poly, T)


def composite_rates(system: ReactionSystem) -> dict[str, float]:
    """Map a one-species non-binary system onto (alpha, beta, gamma, tau).

    Reactions outside the four elementary types raise :class:`ValueError`.
    """
    if system.nspecies != 1 or classify(system) is not SystemClass.NON_BINARY:
        raise ValueError("not a one-species non-binary system")
    rates = {"alpha": 0.0, "beta": 0.0, "gamma": 0.0, "tau": 0.0}
    names = {(1, 2): "alpha", (0, 1): "beta", (0, 2): "gamma", (1, 0): "tau"}
    for r in system.reactions:
        key = (r.inputs[0], r.outputs[0])
        if key == (1, 1) or r.rate == 0:
            continue
        if key not in names:
            raise ValueError(f"reaction {key[0]}A -> {key[1]}A is outside the birth/pair-creation/"
                             "death/autocatalysis family")
        rates[names[key]] += float(r.rate)
    return rates


def solve_semilinear(system: ReactionSystem, t: float, max_deg: int = DEFAULT_MAX_DEG) -> Series:
    """Closed-form PGF of a semi-linear system at time ``t``.

    One species: any mix of the four elementary non-binary reactions.
    Several species: a single reaction (sums of non-commuting multi-species
    reactions have no closed form here).
    """
    active = [r for r in system.reactions if r.rate > 0]
    if system.nspecies == 1:
        rates = composite_rates(system)
        return composite_one_species(rates["alpha"], rates["beta"], rates["gamma"], rates["tau"],
                                     t, system.initial, max_deg)
    if not all(r.is_semilinear() for r in active):
        raise ValueError("system is not semi-linear")
    if len(active) == 0:
        sol = ElementarySolution(TruncatedSeries.constant(1.0, system.nspecies, max_deg),
                                 _variables(system.nspecies, max_deg), None, t)
        return apply_solution(sol, system.initial)
    if len(active) > 1:
        raise ValueError("multi-species closed forms cover single reactions only")
    return apply_solution(elementary_solution(active[0], t, max_deg), system.initial)
