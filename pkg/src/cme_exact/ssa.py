"""Gillespie direct-method simulation over a :class:`ReactionSystem`.

Trajectory ``k`` draws from its own generator seeded with ``(seed, k)``, so
an ensemble is the same whether it is run serially or split across workers.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .reaction_model import ReactionSystem

__all__ = ["TrajectoryEnsemble", "simulate", "run_trajectory"]

_BUFFER = 512


@dataclass
class TrajectoryEnsemble:
    """Empirical state histograms of ``n_traj`` trajectories at each sample time."""

    n_traj: int
    seed: int
    sample_times: list[float]
    samples: list[Counter]

    def histogram(self, i: int) -> Counter:
        return self.samples[i]

    def probabilities(self, i: int, n_max: int | None = None, species: int = 0) -> np.ndarray:
        """Empirical marginal of one species at sample ``i``."""
        counts = Counter()
        for state, c in self.samples[i].items():
            counts[state[species]] += c
        top = max(counts) if n_max is None else n_max
        out = np.zeros(top + 1)
        for n, c in counts.items():
            if n <= top:
                out[n] = c / self.n_traj
        return out

    def _values(self, i: int, species: int):
        items = list(self.samples[i].items())
        vals = np.array([s[species] for s, _ in items], dtype=float)
        w = np.array([c for _, c in items], dtype=float)
        return vals, w

    def mean(self, i: int, species: int = 0) -> float:
        vals, w = self._values(i, species)
        return float(vals @ w / self.n_traj)

    def variance(self, i: int, species: int = 0) -> float:
        """Unbiased sample variance."""
        vals, w = self._values(i, species)
        m = vals @ w / self.n_traj
        if self.n_traj < 2:
            return 0.0
        return float(((vals - m) ** 2) @ w / (self.n_traj - 1))

    def mean_stderr(self, i: int, species: int = 0) -> float:
        return math.sqrt(self.variance(i, species) / self.n_traj)

    def variance_stderr(self, i: int, species: int = 0) -> float:
        """Standard error of the sample variance from the fourth central moment."""
        vals, w = self._values(i, species)
        n = self.n_traj
        m = vals @ w / n
        m2 = ((vals - m) ** 2) @ w / n
        m4 = ((vals - m) ** 4) @ w / n
        return float(math.sqrt(max(m4 - (n - 3) / (n - 1) * m2 * m2, 0.0) / n))


class _Stream:
    """Buffered uniform draws on (0, 1]."""

    def __init__(self, seed: int, k: int):
        self._rng = np.random.default_rng([seed, k])
        self._buf = self._rng.random(_BUFFER)
        self._pos = 0

    def uniform(self) -> float:
        if self._pos == _BUFFER:
            self._buf = self._rng.random(_BUFFER)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return 1.0 - float(u)


def _compile(system: ReactionSystem):
    rates, inputs, changes = [], [], []
    for r in system.reactions:
        if r.rate > 0:
            rates.append(float(r.rate))
            inputs.append([(j, i) for j, i in enumerate(r.inputs) if i])
            changes.append([(j, c) for j, c in enumerate(r.change) if c])
    init_states = list(system.initial.keys())
    init_cdf = np.cumsum([float(system.initial[s]) for s in init_states])
    return rates, inputs, changes, init_states, init_cdf


def _propensity(rate: float, inp, state) -> float:
    a = rate
    for j, i in inp:
        n = state[j]
        for q in range(i):
            a *= n - q
        if a <= 0:
            return 0.0
    return a


def run_trajectory(compiled, times: Sequence[float], seed: int, k: int) -> list[tuple[int, ...]]:
    """States of trajectory ``k`` at each of the sorted ``times``."""
    rates, inputs, changes, init_states, init_cdf = compiled
    stream = _Stream(seed, k)
    if len(init_states) == 1:
        state = list(init_states[0])
    else:
        u = stream.uniform() * init_cdf[-1]
        idx = min(int(np.searchsorted(init_cdf, u)), len(init_states) - 1)
        state = list(init_states[idx])
    out = []
    t = 0.0
    ti = 0
    nr = len(rates)
    while ti < len(times):
        props = [_propensity(rates[j], inputs[j], state) for j in range(nr)]
        total = sum(props)
        t_next = t - math.log(stream.uniform()) / total if total > 0 else math.inf
        while ti < len(times) and times[ti] < t_next:
            out.append(tuple(state))
            ti += 1
        if ti == len(times):
            break
        target = stream.uniform() * total
        acc = 0.0
        choice = nr - 1
        for j in range(nr):
            acc += props[j]
            if target <= acc and props[j] > 0:
                choice = j
                break
        for j, c in changes[choice]:
            state[j] += c
        t = t_next
    return out


def _run_block(args):
    compiled, times, seed, start, stop = args
    hists = [Counter() for _ in times]
    for k in range(start, stop):
        for h, s in zip(hists, run_trajectory(compiled, times, seed, k)):
            h[s] += 1
    return hists


def simulate(system: ReactionSystem, t_final: float, sample_times: Iterable[float] | None = None,
             n_traj: int = 1000, seed: int = 0, workers: int = 1) -> TrajectoryEnsemble:
    """Run ``n_traj`` exact trajectories and histogram them at ``sample_times``.

    ``sample_times`` defaults to ``[t_final]``.  With ``workers > 1`` blocks
    of trajectories run in separate processes; the result does not depend on
    ``workers``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if t_final < 0:
        raise ValueError("t_final must be nonnegative")
    times = sorted(float(t) for t in (sample_times if sample_times is not None else [t_final]))
    if any(t < 0 or t > t_final for t in times):
        raise ValueError("sample times must lie in [0, t_final]")
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    compiled = _compile(system)
    workers = max(1, min(int(workers), n_traj))
    bounds = np.linspace(0, n_traj, workers + 1).astype(int)
    jobs = [(compiled, times, seed, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
    if workers == 1:
        parts = [_run_block(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, jobs))
    merged = [Counter() for _ in times]
    for part in parts:
        for m, h in zip(merged, part):
            m.update(h)
    return TrajectoryEnsemble(n_traj, seed, times, merged)
