import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbdehaze.errors import ContractError, ConvergenceError
from sbdehaze.ot import (DiscreteCoupling, brute_force_ot, entropic_objective, entropy, sinkhorn,
                         squared_euclidean_cost)


def uniform(n):
    return np.full(n, 1.0 / n)


def test_one_by_one():
    c = sinkhorn(np.array([[3.0]]), [1.0], [1.0], 0.1)
    assert np.allclose(c.matrix, [[1.0]])


def test_constant_cost_gives_uniform_coupling():
    c = sinkhorn(np.ones((2, 2)), uniform(2), uniform(2), 0.5)
    assert np.allclose(c.matrix, 0.25)


@pytest.mark.parametrize("n", [4, 5, 6])
def test_small_epsilon_matches_enumeration(n):
    rng = np.random.default_rng(n)
    for _ in range(3):
        cost = rng.random((n, n))
        c = sinkhorn(cost, uniform(n), uniform(n), 1e-3)
        exact = brute_force_ot(cost).transport_cost(cost)
        assert abs(c.transport_cost(cost) - exact) < 1e-2
        assert c.violation < 1e-6


def test_coupling_invariants(rng):
    a = rng.random(4) + 0.1
    a /= a.sum()
    b = rng.random(3) + 0.1
    b /= b.sum()
    c = sinkhorn(rng.random((4, 3)), a, b, 0.05)
    assert np.all(c.matrix >= 0)
    assert np.isclose(c.matrix.sum(), 1.0)
    assert np.allclose(c.matrix.sum(axis=1), a, atol=1e-8)
    assert np.allclose(c.matrix.sum(axis=0), b, atol=1e-8)


def test_violation_decreases_monotonically(rng):
    history = []
    sinkhorn(rng.random((6, 6)), uniform(6), uniform(6), 0.05, eps_scaling=False, history=history)
    h = np.array(history)
    assert len(h) > 3
    assert np.all(np.diff(h) <= 1e-15)


def test_nonconvergence_carries_violation(rng):
    with pytest.raises(ConvergenceError) as info:
        sinkhorn(rng.random((5, 5)), uniform(5), uniform(5), 1e-3, max_iter=2, eps_scaling=False)
    assert info.value.violation > 0


def test_bad_marginals_rejected():
    with pytest.raises(ContractError):
        sinkhorn(np.ones((2, 2)), [1.0, 0.0], uniform(2), 0.1)
    with pytest.raises(ContractError):
        sinkhorn(np.ones((2, 3)), uniform(2), uniform(2), 0.1)


def test_brute_force_identity_favoring():
    n = 5
    cost = 1.0 - np.eye(n)
    c = brute_force_ot(cost)
    assert c.transport_cost(cost) == 0.0
    assert np.allclose(c.matrix, np.eye(n) / n)


def test_brute_force_two_by_two():
    c = brute_force_ot(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(c.matrix, np.eye(2) / 2) and c.transport_cost(np.eye(2)) == 1.0


def test_brute_force_matches_independent_enumeration(rng):
    cost = rng.random((5, 5))
    best = min(sum(cost[i, p[i]] for i in range(5)) for p in itertools.permutations(range(5))) / 5
    assert np.isclose(brute_force_ot(cost).transport_cost(cost), best)


def test_brute_force_size_limit():
    with pytest.raises(ContractError):
        brute_force_ot(np.zeros((9, 9)))


def test_entropic_objective_deterministic_coupling():
    gamma = np.zeros((2, 2))
    gamma[0, 1] = 1.0
    cost = np.array([[0.0, 0.7], [1.0, 0.0]])
    assert entropic_objective(gamma, cost, 3.0) == 0.7


def test_entropic_objective_uniform_two_by_two():
    assert np.isclose(entropic_objective(np.full((2, 2), 0.25), np.zeros((2, 2)), 1.0), -2.772589, atol=1e-6)
    assert np.isclose(entropy(np.full((2, 2), 0.25)), np.log(4))


def _random_coupling(rng, a, b):
    """Feasible coupling by Sinkhorn-scaling a random positive matrix."""
    m = rng.random((len(a), len(b))) + 1e-3
    for _ in range(2000):
        m *= (a / m.sum(axis=1))[:, None]
        m *= (b / m.sum(axis=0))[None, :]
    return m


def test_sinkhorn_beats_random_couplings(rng):
    tau = 0.05
    cost = rng.random((3, 3))
    a = uniform(3)
    best = entropic_objective(sinkhorn(cost, a, a, 2 * tau), cost, tau)
    for _ in range(20):
        assert best <= entropic_objective(_random_coupling(rng, a, a), cost, tau) + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.0, 2.0), min_size=4, max_size=4), st.floats(0.05, 1.0))
def test_two_by_two_grid_search(costs, tau):
    cost = np.array(costs).reshape(2, 2)
    a = uniform(2)
    found = entropic_objective(sinkhorn(cost, a, a, 2 * tau), cost, tau)
    for p in np.linspace(0.0, 0.5, 201):
        gamma = np.array([[p, 0.5 - p], [0.5 - p, p]])
        assert found <= entropic_objective(gamma, cost, tau) + 1e-9


@pytest.mark.parametrize("n", [3, 4, 6])
def test_annealing_cost_non_increasing(n):
    rng = np.random.default_rng(100 + n)
    cost = rng.random((n, n))
    costs = [sinkhorn(cost, uniform(n), uniform(n), eps).transport_cost(cost) for eps in (1.0, 0.1, 0.01)]
    exact = brute_force_ot(cost).transport_cost(cost)
    assert costs[0] >= costs[1] - 1e-12 >= costs[2] - 2e-12
    assert costs[2] >= exact - 1e-12


def test_squared_euclidean_cost():
    x = np.array([[0.0, 0.0], [1.0, 1.0]])
    y = np.array([[1.0, 0.0]])
    assert np.array_equal(squared_euclidean_cost(x, y), [[1.0], [1.0]])


def test_coupling_violation_property():
    c = DiscreteCoupling(np.array([[0.5, 0.0], [0.25, 0.25]]), uniform(2), uniform(2))
    assert np.isclose(c.violation, 0.5)


def test_converges_on_tied_plans():
    # two optimal permutations with identical cost: plain iterations crawl here
    cost = np.array([[0.0, 0.0, 1.0, 1.0], [0.0, 0.0, 1.0, 1.0],
                     [1.0, 1.0, 0.0, 0.3], [1.0, 1.0, 0.3, 0.0]])
    c = sinkhorn(cost, uniform(4), uniform(4), 1e-3)
    assert c.violation < 1e-8
    assert abs(c.transport_cost(cost) - brute_force_ot(cost).transport_cost(cost)) < 1e-2
