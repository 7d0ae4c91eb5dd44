"""Brute-force oracle: truncated master equation integrated with classical RK4.

States live in the box ``{0..n_max}^S``.  Transitions that would leave the
box are dropped (absorbing truncation), so the generator columns are
substochastic and ``1 - sum(psi)`` is an honest, reported error bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .combinatorics import falling_factorial
from .reaction_model import ReactionSystem

__all__ = [
    "NumericGuardError",
    "GeneratorMatrix",
    "DistributionSnapshot",
    "build_generator",
    "integrate",
    "suggest_n_max",
    "STABILITY_LIMIT",
]

STABILITY_LIMIT = 0.1
DEFAULT_STEP_FRACTION = 0.02


class NumericGuardError(RuntimeError):
    """A numerical safety guard tripped (step size, truncation, ...)."""


@dataclass(frozen=True)
class GeneratorMatrix:
    """Sparse generator ``L`` with ``d psi/dt = L psi`` on the truncation box."""

    matrix: sp.csr_matrix
    n_max: int
    nspecies: int

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_max + 1,) * self.nspecies

    def index(self, state: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(state), self.shape))

    def state(self, index: int) -> tuple[int, ...]:
        return tuple(int(k) for k in np.unravel_index(index, self.shape))

    def entry(self, to_state, from_state) -> float:
        to_state = (to_state,) if isinstance(to_state, int) else to_state
        from_state = (from_state,) if isinstance(from_state, int) else from_state
        return float(self.matrix[self.index(to_state), self.index(from_state)])

    def entries(self) -> list[tuple[int, int, float]]:
        coo = self.matrix.tocoo()
        return [(int(r), int(c), float(v)) for r, c, v in zip(coo.row, coo.col, coo.data)]

    def max_exit_rate(self) -> float:
        d = self.matrix.diagonal()
        return float(np.max(np.abs(d))) if d.size else 0.0


@dataclass
class DistributionSnapshot:
    """Distribution over the truncation box at one time, plus the mass lost."""

    time: float
    probs: np.ndarray
    leak: float

    def p(self, state) -> float:
        state = (state,) if isinstance(state, (int, np.integer)) else tuple(state)
        if any(k < 0 or k >= self.probs.shape[j] for j, k in enumerate(state)):
            return 0.0
        return float(self.probs[state])

    def as_dict(self, tol: float = 0.0) -> dict[tuple[int, ...], float]:
        return {tuple(int(k) for k in idx): float(v)
                for idx, v in np.ndenumerate(self.probs) if abs(v) > tol}

    def marginal(self, species: int = 0) -> np.ndarray:
        axes = tuple(a for a in range(self.probs.ndim) if a != species)
        return self.probs.sum(axis=axes) if axes else self.probs

    def mean(self, species: int = 0) -> float:
        m = self.marginal(species)
        return float(np.arange(m.size) @ m)


def build_generator(system: ReactionSystem, n_max: int) -> GeneratorMatrix:
    """Generator of the truncated master equation.

    Each reaction ``i -> o`` at rate ``r`` moves mass from ``n`` to
    ``n - i + o`` at propensity ``r * prod_j (n_j)_{i_j}``.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    outside = [s for s in system.initial if max(s, default=0) > n_max]
    if outside:
        raise NumericGuardError(f"initial state {outside[0]} lies outside the truncation n_max={n_max}")
    S = system.nspecies
    shape = (n_max + 1,) * S
    dim = int(np.prod(shape)) if S else 1
    grid = np.indices(shape).reshape(S, -1) if S else np.zeros((0, 1), dtype=int)
    rows, cols, vals = [], [], []
    diag = np.zeros(dim)
    ff_cache: dict[int, np.ndarray] = {}

    def ff(i: int) -> np.ndarray:
        if i not in ff_cache:
            ff_cache[i] = np.array([falling_factorial(n, i) for n in range(n_max + 1)], dtype=np.float64)
        return ff_cache[i]

    src = np.arange(dim)
    for r in system.reactions:
        rate = float(r.rate)
        if rate == 0:
            continue
        prop = np.full(dim, rate)
        for j in range(S):
            if r.inputs[j]:
                prop *= ff(r.inputs[j])[grid[j]]
        active = prop > 0
        diag[active] -= prop[active]
        target = grid + np.array(r.change, dtype=int).reshape(S, 1)
        inside = active & np.all((target >= 0) & (target <= n_max), axis=0)
        if not inside.any():
            continue
        tgt = np.ravel_multi_index(tuple(target[:, inside]), shape)
        rows.append(tgt)
        cols.append(src[inside])
        vals.append(prop[inside])
    rows.append(src)
    cols.append(src)
    vals.append(diag)
    mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(dim, dim)).tocsr()
    mat.sum_duplicates()
    mat.eliminate_zeros()
    return GeneratorMatrix(mat, n_max, S)


def _initial_vector(system: ReactionSystem, gen: GeneratorMatrix) -> np.ndarray:
    psi = np.zeros(gen.dimension)
    for state, p in system.initial.items():
        psi[gen.index(state)] += float(p)
    return psi


def suggest_n_max(system: ReactionSystem, t_final: float) -> int:
    """Truncation size from the deterministic rate equation.

    Integrates the mean-field rate equation together with the linear-noise
    variance ``dV/dt = 2 J V + D`` (per species) up to ``t_final`` and pads the
    largest mean by eight standard deviations.  When no reaction raises the
    total particle count, the largest initial total is an exact bound.
    """
    S = system.nspecies
    if all(sum(r.change) <= 0 for r in system.reactions if r.rate > 0):
        return max(sum(state) for state in system.initial)
    start = np.array([float(sum(p * s[j] for s, p in system.initial.items())) for j in range(S)])
    var0 = np.array([float(sum(p * s[j] ** 2 for s, p in system.initial.items())) for j in range(S)]) - start ** 2
    reactions = [r for r in system.reactions if r.rate > 0]
    change = np.array([r.change for r in reactions], dtype=float).reshape(-1, S)

    def propensity_and_grad(m):
        a = np.empty(len(reactions))
        grad = np.zeros((len(reactions), S))
        for k, r in enumerate(reactions):
            factors = []
            for j in range(S):
                f, df = 1.0, 0.0
                for q in range(r.inputs[j]):
                    term = max(m[j] - q, 0.0)
                    df = df * term + f
                    f *= term
                factors.append((f, df))
            a[k] = float(r.rate) * np.prod([f for f, _ in factors])
            for j in range(S):
                others = np.prod([f for jj, (f, _) in enumerate(factors) if jj != j])
                grad[k, j] = float(r.rate) * factors[j][1] * others
        return a, grad

    def rhs(y):
        m, v = y[:S], y[S:]
        a, grad = propensity_and_grad(m)
        drift = a @ change
        jac = np.einsum("kj,kj->j", change, grad)
        diffusion = a @ (change ** 2)
        return np.concatenate([drift, 2.0 * jac * v + diffusion])

    y = np.concatenate([start, np.maximum(var0, 0.0)])
    m_max = float(np.max(start)) if S else 0.0
    v_max = float(np.max(y[S:])) if S else 0.0
    steps = 400
    h = t_final / steps if t_final > 0 else 0.0
    for _ in range(steps if h > 0 and reactions else 0):
        k1 = rhs(y)
        k2 = rhs(y + h / 2 * k1)
        k3 = rhs(y + h / 2 * k2)
        k4 = rhs(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        y = np.maximum(y, 0.0)
        if not np.all(np.isfinite(y)):
            raise NumericGuardError("rate equation blows up before t_final; set n_max explicitly")
        m_max = max(m_max, float(np.max(y[:S])))
        v_max = max(v_max, float(np.max(y[S:])))
    sigma = math.sqrt(v_max + m_max + 1.0)
    return int(math.ceil(max(m_max, system.max_initial()) + 8.0 * sigma)) + 10


def _rk4_step(L, psi: np.ndarray, h: float) -> np.ndarray:
    k1 = L @ psi
    k2 = L @ (psi + 0.5 * h * k1)
    k3 = L @ (psi + 0.5 * h * k2)
    k4 = L @ (psi + h * k3)
    return psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(system: ReactionSystem, t_final: float, n_max: int | None = None,
              dt: float | None = None, sample_times: Iterable[float] | None = None,
              generator: GeneratorMatrix | None = None) -> list[DistributionSnapshot]:
    """Fixed-step RK4 solution of the truncated master equation.

    Returns one snapshot per entry of ``sample_times`` (default: ``[t_final]``).
    Each snapshot is hit exactly by shrinking the step inside its interval.
    ``dt`` defaults to ``0.02 / max exit rate``; a ``dt`` beyond
    ``0.1 / max exit rate`` raises :class:`NumericGuardError`.
    """
    if t_final < 0:
        raise ValueError("t_final must be nonnegative")
    times = sorted(float(t) for t in sample_times) if sample_times is not None else [float(t_final)]
    if any(t < 0 for t in times):
        raise ValueError("sample times must be nonnegative")
    if times and times[-1] > t_final + 1e-15:
        raise ValueError("sample time beyond t_final")
    if n_max is None:
        n_max = generator.n_max if generator is not None else suggest_n_max(system, t_final)
    gen = generator if generator is not None else build_generator(system, n_max)
    rate = gen.max_exit_rate()
    if dt is None:
        dt = DEFAULT_STEP_FRACTION / rate if rate > 0 else max(t_final, 1.0)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt * rate > STABILITY_LIMIT:
        raise NumericGuardError(
            f"step {dt:g} times max exit rate {rate:g} exceeds {STABILITY_LIMIT}; "
            f"use dt <= {STABILITY_LIMIT / rate:.3g} or a smaller n_max")
    L = gen.matrix
    psi = _initial_vector(system, gen)
    shape = gen.shape
    out = []
    t = 0.0
    for target in times:
        gap = target - t
        if gap > 0:
            nsteps = max(1, math.ceil(gap / dt - 1e-9))
            h = gap / nsteps
            for _ in range(nsteps):
                psi = _rk4_step(L, psi, h)
            t = target
        out.append(DistributionSnapshot(target, psi.reshape(shape).copy(), float(1.0 - psi.sum())))
    return out
