"""Coupled pairs: matching optimality, invariances, contraction bound."""

import itertools
import math

import numpy as np
import pytest
from scipy import stats

from nbbmlab import coupling, waves
from nbbmlab.measures import from_positions, wasserstein_w_exact


def brute_force_capped(x, y):
    n = len(x)
    return min(sum(min(abs(x[i] - y[p[i]]), 1.0) for i in range(n)) / n
               for p in itertools.permutations(range(n)))


def test_monge_match_identity_and_example():
    x = np.array([2.0, 0.0, 1.0])
    perm = coupling.monge_match(x, x)
    assert coupling.matching_cost(x, x, perm) == 0.0
    x, y = np.array([0.0, 1.0]), np.array([0.0, 2.0])
    perm = coupling.monge_match(x, y)
    assert coupling.matching_cost(x, y, perm) == pytest.approx(0.5)
    assert brute_force_capped([0, 1], [0, 2]) == pytest.approx(0.5)
    with pytest.raises(ValueError, match="length mismatch"):
        coupling.monge_match([0.0], [0.0, 1.0])


def test_monge_match_optimal_within_unit_window():
    # all displacements below the cap: rank matching solves the problem
    rng = np.random.default_rng(17)
    for _ in range(100):
        n = int(rng.integers(2, 8))
        x = rng.uniform(0, 0.95, n)
        y = rng.uniform(0, 0.95, n)
        perm = coupling.monge_match(x, y)
        assert coupling.matching_cost(x, y, perm) == \
            pytest.approx(brute_force_capped(x, y), abs=1e-12)


def test_monge_match_saturated_counterexample():
    # far clouds: one saturated pair cheaper than the rank coupling
    x = np.array([0.0, 0.4])
    y = np.array([0.7, 1.3])
    perm = coupling.monge_match(x, y)
    assert coupling.matching_cost(x, y, perm) == pytest.approx(0.8)
    assert brute_force_capped(x, y) == pytest.approx(0.65)
    assert wasserstein_w_exact(from_positions(x),
                               from_positions(y)) == pytest.approx(0.65)


def test_identical_systems_stay_identical():
    cp = coupling.new_coupled(12, "zeros", "zeros", seed=1)
    for _ in range(60):
        coupling.step_coupled(cp)
        np.testing.assert_array_equal(np.sort(cp.ps_a.positions),
                                      np.sort(cp.ps_b.positions))
    assert cp.distance() == 0.0


def test_translation_preserved_exactly():
    rng = np.random.default_rng(2)
    base = waves.sample_pi_min(rng, 24).atoms
    for mode in ("restricted", "literal"):
        eps = 0.4
        cp = coupling.new_coupled(24, base, base + eps, seed=3, mode=mode)
        assert cp.distance() == pytest.approx(eps, abs=1e-12)
        for t in (0.5, 1.0, 2.0):
            coupling.advance_coupled(cp, t)
            assert cp.distance() == pytest.approx(eps, abs=1e-12)
        assert cp.ps_a.n_events == cp.ps_b.n_events


def test_distance_never_exceeds_one():
    cp = coupling.new_coupled(16, "zeros",
                              lambda rng, n: rng.normal(5.0, 1.0, n), seed=4)
    for _ in range(50):
        coupling.step_coupled(cp)
        assert cp.distance() <= 1.0


def test_contraction_at_time_zero_and_beyond():
    rep = coupling.contraction_estimate(32, waves.sample_pi_min,
                                        waves.sample_pi_min, 0.0, 20, seed=5)
    assert rep.lhs == pytest.approx(rep.rhs)
    reports = coupling.contraction_estimate(
        64, waves.sample_pi_min, waves.sample_pi_min, [0.5, 1.0], 60, seed=6)
    for rep in reports:
        assert rep.ok, (rep.t, rep.lhs, rep.rhs)
    with pytest.raises(ValueError):
        coupling.contraction_estimate(8, "zeros", "zeros", [-1.0], 4)


def test_contraction_from_mixed_starts():
    reports = coupling.contraction_estimate(
        64, ("delta", 0.0), waves.sample_pi_min, [0.5, 1.0], 60, seed=7)
    for rep in reports:
        assert rep.ok


def test_supermartingale_negative_drift():
    incs = coupling.supermartingale_increments(64, waves.sample_pi_min,
                                               "zeros", 3.0, seed=8)
    assert incs.size > 100
    se = incs.std(ddof=1) / math.sqrt(incs.size)
    assert incs.mean() <= 3 * se


def test_marginals_match_plain_system():
    # leftmost displacement over [0, 1]: coupled system a vs a plain run
    n_rep = 300
    coupled = coupling.marginal_leftmost_displacement(
        16, waves.sample_pi_min, 1.0, n_rep, seed=9, coupled=True)
    plain = coupling.marginal_leftmost_displacement(
        16, waves.sample_pi_min, 1.0, n_rep, seed=10, coupled=False)
    res = stats.ks_2samp(coupled, plain)
    assert res.pvalue > 1e-3


def test_coupled_needs_two_particles_and_valid_mode():
    with pytest.raises(ValueError):
        coupling.new_coupled(1, "zeros", "zeros")
    with pytest.raises(ValueError, match="mode"):
        coupling.new_coupled(4, "zeros", "zeros", mode="greedy")
