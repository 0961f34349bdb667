import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import random_mdp, random_policy
from scipy.optimize import linprog

from outcome_rl.coverability import (
    coverability,
    coverability_bisection_oracle,
    coverability_prime,
    coverability_report,
    max_density_ratio,
    policy_set,
)
from outcome_rl.mdp import Policy, TabularMdp, occupancy


def lp_coverability(mdp, policies):
    """Per step: minimise sum(nu) subject to nu >= d^pi_h for all pi (nu = C * mu)."""
    occ = np.stack([occupancy(mdp, p) for p in policies])
    worst = 0.0
    for h in range(mdp.horizon):
        d = occ[:, h].reshape(len(policies), -1)
        n = d.shape[1]
        res = linprog(np.ones(n), A_ub=-np.tile(np.eye(n), (len(policies), 1)), b_ub=-d.ravel(), bounds=(0, None))
        assert res.status == 0
        worst = max(worst, res.fun)
    return worst


def random_instance(seed):
    rng = np.random.default_rng(seed)
    S, A, H = rng.integers(1, 5), rng.integers(1, 4), rng.integers(1, 5)
    mdp = random_mdp(rng, S, A, H)
    policies = [random_policy(rng, mdp) for _ in range(rng.integers(1, 6))]
    return mdp, policies


def test_single_policy_has_coverability_one(rng):
    mdp = random_mdp(rng, 4, 3, 4)
    assert coverability(mdp, [random_policy(rng, mdp)]) == 1.0


def test_all_actions_at_a_single_state():
    mdp = TabularMdp(np.zeros((0, 1, 3, 1)), [1.0], np.zeros((1, 1, 3)))
    pols = [Policy.constant(1, 1, a) for a in range(3)]
    assert coverability(mdp, pols) == 3.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_closed_form_matches_bisection_and_lp(seed):
    mdp, policies = random_instance(seed)
    closed = coverability(mdp, policies)
    assert coverability_bisection_oracle(mdp, policies) == pytest.approx(closed, abs=1e-9)
    assert lp_coverability(mdp, policies) == pytest.approx(closed, abs=1e-7)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_coverability_bounds(seed):
    mdp, policies = random_instance(seed)
    c = coverability(mdp, policies)
    assert 1.0 - 1e-12 <= c <= min(len(policies), mdp.num_states * mdp.num_actions) + 1e-12
    assert coverability_prime(mdp, policies) >= c - 1e-12


def test_witness_attains_coefficient(rng):
    mdp = random_mdp(rng, 4, 3, 3)
    policies = [random_policy(rng, mdp) for _ in range(4)]
    report = coverability_report(mdp, policies)
    np.testing.assert_allclose(report.witness.sum(axis=(1, 2)), 1.0)
    occ = np.stack([occupancy(mdp, p) for p in policies])
    assert max_density_ratio(occ, report.witness) == pytest.approx(report.value)
    assert report.to_dict()["coverability"] == report.value


def test_density_ratio_conventions():
    occ = np.array([[[[0.0, 1.0]]]])
    assert max_density_ratio(occ, np.array([[[0.0, 1.0]]])) == 1.0
    assert max_density_ratio(occ, np.array([[[1.0, 0.0]]])) == np.inf


def test_coverability_prime_with_fixed_start_equals_coverability(rng):
    mdp = random_mdp(rng, 3, 2, 3, fixed_start=True)
    policies = [random_policy(rng, mdp) for _ in range(3)]
    assert coverability_prime(mdp, policies) == pytest.approx(coverability(mdp, policies))


def test_policy_set_accepts_tables(rng):
    pols = policy_set([np.zeros((2, 3), dtype=int), Policy.constant(2, 3, 1)])
    assert all(isinstance(p, Policy) for p in pols)
    with pytest.raises(ValueError):
        coverability(random_mdp(rng, 3, 2, 2), [])
