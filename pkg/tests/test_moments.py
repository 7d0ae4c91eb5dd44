import math
from fractions import Fraction as F

import numpy as np
import pytest

from cme_exact.combinatorics import falling_factorial
from cme_exact.moments import (
    OperatorRep,
    OperatorTerm,
    build_egf_operator,
    build_fmgf_operator,
    cumulants_from_pgf,
    egf_in_shifted_variable,
    factorial_moment_system,
    factorial_moments,
    first_order_closure,
    fmgf_in_shifted_variable,
    operators_consistent,
    phi,
)
from cme_exact.polyseries import TruncatedSeries
from cme_exact.reaction_model import Reaction, ReactionSystem, parse_dsl
from cme_exact.semilinear import composite_one_species, pois, solve_semilinear


def one(i, o, r=F(3)):
    return ReactionSystem(("A",), [Reaction((i,), (o,), r)])


def test_egf_operator_examples():
    r = F(3)
    assert build_egf_operator(one(1, 0)).terms == [OperatorTerm((1,), r, exp_shift=(-1,))]
    assert build_egf_operator(one(2, 1)).terms == [
        OperatorTerm((1,), -r, exp_shift=(-1,)), OperatorTerm((2,), r, exp_shift=(-1,))]
    assert build_egf_operator(one(0, 2)).terms == [OperatorTerm((0,), r, exp_shift=(2,))]


def test_fmgf_operator_examples():
    r = F(3)
    (t,) = build_fmgf_operator(one(1, 2)).terms
    assert t.deriv == (1,) and t.scalar == r and t.poly_dict() == {(1,): 1, (2,): 1}
    (t,) = build_fmgf_operator(one(2, 0)).terms
    assert t.deriv == (2,) and t.poly_dict() == {(1,): -2, (2,): -1}
    (t,) = build_fmgf_operator(one(0, 1)).terms
    assert t.deriv == (0,) and t.poly_dict() == {(1,): 1}


def test_zero_rate_and_no_change_reactions_dropped():
    assert len(build_fmgf_operator(one(1, 1))) == 0
    assert len(build_egf_operator(one(2, 2))) == 0
    assert len(build_egf_operator(one(1, 0, F(0)))) == 0


PAIRS = [(i, o) for i in range(3) for o in range(3) if i or o]


@pytest.mark.parametrize("i,o", PAIRS)
def test_operator_consistency_single_species(i, o):
    assert operators_consistent(one(i, o))


def test_operator_consistency_multispecies():
    s = parse_dsl("A + B -> 2C @ 2\n2A -> B @ 1/3\n0 -> A + C @ 1\nC -> 0 @ 5")
    assert operators_consistent(s)


def test_mutated_operator_detected():
    op = build_egf_operator(one(2, 0))
    bad = OperatorRep(1, [OperatorTerm(t.deriv, t.scalar * (2 if t.deriv == (1,) else 1), exp_shift=t.exp_shift)
                          for t in op.terms])
    good = fmgf_in_shifted_variable(build_fmgf_operator(one(2, 0)))
    assert egf_in_shifted_variable(op) == good
    assert egf_in_shifted_variable(bad) != good


def test_factorial_moment_examples():
    tau, beta, r = F(4), F(50), F(1, 3)
    ode = factorial_moment_system(parse_dsl(f"A -> 0 @ {tau}"), 1)
    assert ode.rows[(1,)] == {(1,): -tau} and ode.closed
    ode = factorial_moment_system(parse_dsl(f"0 -> A @ {beta}"), 1)
    assert ode.rows[(1,)] == {(0,): beta}
    assert ode.source()[0] == 50.0 and ode.matrix()[0, 0] == 0.0
    ode = factorial_moment_system(parse_dsl(f"2A -> 0 @ {r}"), 1)
    assert ode.rows[(1,)] == {(2,): -2 * r}
    assert not ode.closed and ode.open_dependencies == {(2,)}
    with pytest.raises(ValueError):
        ode.solve([1.0], 1.0)


PAIRS = [(i, o) for i in range(3) for o in range(3) if i or o]


@pytest.mark.parametrize("i,o", PAIRS)
def test_phi_rows_match_direct_expansion(i, o):
    # d/dt f_n = coefficient of nu^n/n! in r((nu+1)^o - (nu+1)^i) d^i F, F = sum nu^m f_m/m!
    r = F(2)
    ode = factorial_moment_system(one(i, o, r), 4)
    for (n,) in ode.indices:
        expected = {}
        for a in range(max(i, o) + 1):
            c = math.comb(o, a) - math.comb(i, a)
            if c and a <= n:
                m = (n + i - a,)
                expected[m] = expected.get(m, 0) + r * c * falling_factorial(n, a)
        assert ode.rows[(n,)] == {k: v for k, v in expected.items() if v}


def test_phi_values():
    assert phi((1,), (1,), (1,), (0,)) == -1
    assert phi((1,), (1,), (2,), (0,)) == -2
    assert phi((2,), (3,), (2,), (1,)) == -2 * 3
    assert phi((0,), (4,), (2,), (1,)) == 0
    assert phi((1, 1), (1, 2), (1, 1), (0, 2)) == (0 - 1) * 1 * 2


def test_closure_examples():
    c = first_order_closure(parse_dsl("A -> 0 @ 4"))
    assert c.closed and c.exact_matrix == [[-4]] and c.exact_source == [0]
    assert not first_order_closure(parse_dsl("2A -> 0 @ 1")).closed
    c = first_order_closure(parse_dsl("0 -> A @ 50"))
    assert c.closed and c.exact_matrix == [[0]] and c.exact_source == [50]
    c = first_order_closure(parse_dsl("A -> B @ 1\nB -> 0 @ 2\n0 -> 2A @ 3"))
    assert c.exact_matrix == [[-1, 0], [1, -2]] and c.exact_source == [6, 0]
    with pytest.raises(ValueError):
        first_order_closure(parse_dsl("2A -> 0 @ 1")).mean([1.0], 1.0)


@pytest.mark.parametrize("dsl", ["A -> 0 @ 4", "0 -> A @ 50", "A -> 2A @ 1/2", "0 -> 2A @ 25"])
def test_closure_mean_matches_closed_form(dsl):
    system = parse_dsl(dsl, initial={(100,): 1.0})
    closure = first_order_closure(system)
    for t in (0.01, 0.05, 0.1):
        p = solve_semilinear(system, t, 400)
        assert closure.mean([100.0], t)[0] == pytest.approx(cumulants_from_pgf(p, 1)[0], abs=1e-7)


def test_factorial_moment_ode_matches_pgf_to_order_three():
    system = parse_dsl("0 -> A @ 1/5\n0 -> 2A @ 3/5\nA -> 0 @ 1/5", initial={(100,): 1.0})
    ode = factorial_moment_system(system, 3)
    f0 = [100.0, 100.0 * 99, 100.0 * 99 * 98]
    p = composite_one_species(0, 0.2, 0.6, 0.2, 2.0, {100: 1.0}, 300)
    got = ode.solve(f0, 2.0)
    ref = factorial_moments(p, 3)[1:]
    assert np.allclose(got, ref, rtol=1e-9)


def test_cumulant_examples():
    x = TruncatedSeries.variable(0, 1, 60)
    assert cumulants_from_pgf(pois(2.0, x)) == pytest.approx([2.0, 2.0, 2.0], abs=1e-10)
    assert cumulants_from_pgf(np.eye(8)[7]) == pytest.approx([7.0, 0.0, 0.0], abs=1e-12)
    q = 0.3
    binom = np.array([math.comb(4, k) * q**k * (1 - q) ** (4 - k) for k in range(5)])
    assert cumulants_from_pgf(binom) == pytest.approx([4 * q, 4 * q * (1 - q), 4 * q * (1 - q) * (1 - 2 * q)])
    with pytest.raises(ValueError):
        cumulants_from_pgf(binom, 4)
    with pytest.raises(ValueError):
        cumulants_from_pgf(binom * 0.5)


def test_cumulants_of_second_species():
    p = np.zeros((3, 3))
    p[0, 2] = 0.5
    p[1, 0] = 0.5
    assert cumulants_from_pgf(p, 2, species=1) == pytest.approx([1.0, 1.0])
