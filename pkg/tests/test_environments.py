import numpy as np
import pytest
from oracles import all_policies

from outcome_rl.classes import RewardClass, check_completeness, check_realizability, greedy_policy
from outcome_rl.environments import (
    build_deterministic_chain,
    build_hard_case,
    build_random_tabular,
    build_relu_family,
    relu_comparator_class,
    relu_q_class,
    relu_rewards,
    sphere_packing,
)
from outcome_rl.mdp import Policy, optimal_q, optimal_value, policy_value


def test_hard_case_tables():
    b = build_hard_case()
    q = b.q_class.tables
    # step-1 value at s1 (both actions) and step-2 values at s2
    np.testing.assert_allclose(q[:, 0, 0, 0], [0.40, 0.20, 0.59, 0.39])
    np.testing.assert_allclose(q[:, 0, 0, 1], [0.40, 0.20, 0.59, 0.39])
    np.testing.assert_allclose(q[:, 1, 1], [[0.20, 0.19], [0.20, 0.19], [0.38, 0.39], [0.38, 0.39]])
    r = b.r_class.tables
    np.testing.assert_allclose(r[:, 0, 0], [[0.20, 0.20], [0.0, 0.0]])
    np.testing.assert_allclose(r[:, 1, 1], [[0.20, 0.19], [0.38, 0.39]])
    np.testing.assert_array_equal(b.mdp.mean_reward, r[0])


def test_hard_case_ground_truth_and_assumptions():
    b = build_hard_case()
    np.testing.assert_allclose(optimal_q(b.mdp)[0, 0], [0.40, 0.40])
    np.testing.assert_allclose(optimal_q(b.mdp)[1, 1], [0.20, 0.19])
    assert optimal_value(b.mdp) == pytest.approx(0.40)
    assert check_realizability(b.mdp, b.q_class, b.r_class) == (0.0, 0.0)
    assert check_completeness(b.mdp, b.q_class, b.r_class, b.g_class) <= 1e-12
    assert b.mdp.is_deterministic() and b.mdp.fixed_start == 0


def test_hard_case_outcome_rewards_agree_off_s2_a1():
    b = build_hard_case()
    r1, r2 = b.r_class.tables
    for a1 in (0, 1):
        # any trajectory ending with a2 has the same total under both models
        assert r1[0, 0, a1] + r1[1, 1, 1] == pytest.approx(r2[0, 0, a1] + r2[1, 1, 1])
        assert r1[0, 0, a1] + r1[1, 1, 0] != pytest.approx(r2[0, 0, a1] + r2[1, 1, 0])


def test_hard_case_trap_values():
    b = build_hard_case()
    assert greedy_policy(b.q_class[2])(1, 1) == 1
    assert greedy_policy(b.q_class[3])(1, 1) == 1
    pi = greedy_policy(b.q_class[3])
    assert 0.40 - policy_value(b.mdp, pi)[0] == pytest.approx(0.01)


def test_sphere_packing_respects_bound(rng):
    theta = sphere_packing(6, 1 / 3, 32, rng)
    assert len(theta) == 32
    np.testing.assert_allclose(np.linalg.norm(theta, axis=1), 1.0)
    gram = theta @ theta.T
    assert gram[~np.eye(32, dtype=bool)].max() <= 2 / 3


def test_sphere_packing_one_dimension(rng):
    np.testing.assert_array_equal(sphere_packing(1, 0.5, 10, rng), [[1.0], [-1.0]])
    with pytest.raises(ValueError):
        sphere_packing(3, 1.5, 4, rng)


def test_relu_rewards_match_formula(rng):
    theta = sphere_packing(4, 1 / 3, 8, rng)
    v = 3
    r = relu_rewards(theta, 1 / 3, v)
    b = 2 / 3
    for a in range(8):
        dot = theta[a] @ theta[v]
        assert r[0, 0, a] == pytest.approx((max(dot - b, 0) + dot + 1) / 3)
        assert r[1, a + 1, 0] == pytest.approx((1 - dot) / 3)


def test_relu_policy_values(rng):
    theta = sphere_packing(3, 1 / 3, 6, rng)
    fam = build_relu_family(theta, 1 / 3, hidden_index=2)
    for arm in range(6):
        table = np.zeros((2, 7), dtype=int)
        table[0, 0] = arm
        J, _ = policy_value(fam.mdp, Policy(table))
        assert J == pytest.approx(2 / 3 + (1 / 9 if arm == 2 else 0.0), abs=1e-12)
        assert J == pytest.approx(fam.arm_value(arm))
    assert optimal_value(fam.mdp) == pytest.approx(2 / 3 + 1 / 9)


def test_relu_family_rejects_bad_packing():
    theta = np.array([[1.0, 0.0], [0.99, np.sqrt(1 - 0.99**2)]])
    with pytest.raises(ValueError, match="inner-product"):
        build_relu_family(theta, 1 / 3)
    with pytest.raises(ValueError, match="unit norm"):
        build_relu_family(np.array([[2.0, 0.0]]), 1 / 3)


def test_relu_classes_are_realizable_and_complete(rng):
    theta = sphere_packing(3, 1 / 3, 5, rng)
    fam = build_relu_family(theta, 1 / 3, hidden_index=1)
    F = relu_q_class(fam)
    G = relu_comparator_class(fam, F)
    R = RewardClass([relu_rewards(theta, 1 / 3, u) for u in range(5)])
    assert check_realizability(fam.mdp, F, R) == (0.0, 0.0)
    assert check_completeness(fam.mdp, F, R, G) == 0.0


def test_random_tabular_is_normalised():
    mdp = build_random_tabular(5, 3, 4, seed=2)
    lo, hi = mdp.reachable_return_range()
    assert 0 <= lo <= hi <= 1
    assert build_random_tabular(5, 3, 4, seed=2, fixed_start=True).fixed_start == 0
    with pytest.raises(ValueError):
        build_random_tabular(2, 2, 2, reward_scale=2.0)


def test_deterministic_chain_structure():
    mdp = build_deterministic_chain(5, 2, seed=1)
    assert mdp.is_deterministic() and mdp.horizon == 5
    for h in range(4):
        for s in range(5):
            assert mdp.transitions[h, s, 0].argmax() == min(s + 1, 4)
    assert build_deterministic_chain(5, 2, random_start=True).fixed_start is None


def test_deterministic_chain_optimum_by_enumeration():
    mdp = build_deterministic_chain(3, 2, seed=4, horizon=2)
    best = max(policy_value(mdp, p)[0] for p in all_policies(mdp))
    assert optimal_value(mdp) == pytest.approx(best)
