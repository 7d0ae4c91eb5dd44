import math

import numpy as np
import pytest

from cme_exact.master_equation import (
    NumericGuardError,
    build_generator,
    integrate,
    suggest_n_max,
)
from cme_exact.reaction_model import parse_dsl


def test_decay_generator_entries():
    gen = build_generator(parse_dsl("A -> 0 @ 4", initial={(2,): 1.0}), 2)
    tau = 4.0
    assert gen.entry(0, 1) == tau
    assert gen.entry(1, 1) == -tau
    assert gen.entry(1, 2) == 2 * tau
    assert gen.entry(2, 2) == -2 * tau


def test_birth_generator_entries():
    gen = build_generator(parse_dsl("0 -> A @ 3"), 5)
    for n in range(5):
        assert gen.entry(n + 1, n) == 3.0
        assert gen.entry(n, n) == -3.0
    # absorbing truncation: outflow at the edge is lost, not reflected
    assert gen.entry(5, 5) == -3.0


def test_zero_system_is_zero_matrix():
    gen = build_generator(parse_dsl("A -> 0 @ 0"), 4)
    assert gen.matrix.nnz == 0


def test_generator_columns_substochastic():
    s = parse_dsl("0 -> 2A @ 2\nA -> 0 @ 1\n2A -> A @ 1/3\nA + B -> 0 @ 1\n0 -> B @ 1")
    gen = build_generator(s, 6)
    m = gen.matrix.toarray()
    off = m - np.diag(np.diag(m))
    assert np.all(off >= 0)
    assert np.all(m.sum(axis=0) <= 1e-12)


def test_initial_outside_box():
    with pytest.raises(NumericGuardError):
        build_generator(parse_dsl("A -> 0 @ 1", initial={(10,): 1.0}), 5)


def test_decay_from_one():
    s = integrate(parse_dsl("A -> 0 @ 4", initial={(1,): 1.0}), 0.5, n_max=1)[0]
    assert s.p(1) == pytest.approx(math.exp(-2.0), abs=1e-8)
    assert abs(s.leak) < 1e-12


def test_t_zero_returns_initial():
    s = integrate(parse_dsl("A -> 0 @ 4", initial={(3,): 0.25, (5,): 0.75}), 0.0, n_max=8)[0]
    assert s.p(3) == 0.25 and s.p(5) == 0.75


def test_pair_annihilation_two_state():
    s = integrate(parse_dsl("2A -> 0 @ 1", initial={(2,): 1.0}), 0.7, n_max=2)[0]
    assert s.p(2) == pytest.approx(math.exp(-1.4), abs=1e-9)
    assert s.p(0) == pytest.approx(1 - math.exp(-1.4), abs=1e-9)


def test_stability_guard():
    with pytest.raises(NumericGuardError):
        integrate(parse_dsl("A -> 0 @ 4", initial={(10,): 1.0}), 1.0, n_max=10, dt=0.01)


def test_conservation_and_dt_halving():
    s = parse_dsl("A -> 0 @ 1\n2A -> A @ 1/2", initial={(30,): 1.0})
    a = integrate(s, 1.0, n_max=30, sample_times=[0.3, 1.0])
    rate = build_generator(s, 30).max_exit_rate()
    b = integrate(s, 1.0, n_max=30, dt=0.01 / rate, sample_times=[0.3, 1.0])
    for x, y in zip(a, b):
        assert abs(x.probs.sum() - 1) < 1e-9
        assert x.probs.min() > -1e-10
        assert np.max(np.abs(x.probs - y.probs)) < 1e-8


def test_leak_reported_for_creation():
    s = parse_dsl("0 -> A @ 50", initial={(100,): 1.0})
    snap = integrate(s, 0.1, n_max=suggest_n_max(s, 0.1))[0]
    assert 0 <= snap.leak < 1e-6
    tight = integrate(s, 0.1, n_max=103)[0]
    assert tight.leak > 1e-3
    assert tight.leak == pytest.approx(1 - tight.probs.sum())


def test_birth_matches_poisson():
    s = parse_dsl("0 -> A @ 2")
    snap = integrate(s, 1.5, n_max=suggest_n_max(s, 1.5))[0]
    mu = 3.0
    expected = [math.exp(-mu) * mu**n / math.factorial(n) for n in range(10)]
    assert np.max(np.abs(snap.probs[:10] - expected)) < 1e-9


def test_two_species_conversion():
    # A -> B: independent Bernoulli thinning, P(A=a, B=n-a)
    s = parse_dsl("A -> B @ 1", initial={(3, 0): 1.0})
    snap = integrate(s, 0.4, n_max=3)[0]
    q = math.exp(-0.4)
    for a in range(4):
        assert snap.p((a, 3 - a)) == pytest.approx(math.comb(3, a) * q**a * (1 - q) ** (3 - a), abs=1e-8)
    assert snap.marginal(1).sum() == pytest.approx(1.0)


def test_sample_times_hit_exactly():
    s = parse_dsl("A -> 0 @ 1", initial={(1,): 1.0})
    snaps = integrate(s, 1.0, n_max=1, sample_times=[1.0, 0.123, 0.5])
    assert [x.time for x in snaps] == [0.123, 0.5, 1.0]
    assert snaps[0].p(1) == pytest.approx(math.exp(-0.123), abs=1e-10)


def test_exact_truncation_when_count_cannot_grow():
    s = parse_dsl("2A -> A @ 1/10\nA -> B @ 1", initial={(30, 4): 0.5, (10, 10): 0.5})
    assert suggest_n_max(s, 5.0) == 34
    snap = integrate(s, 1.0)[0]
    assert abs(snap.leak) < 1e-12
