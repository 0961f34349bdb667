"""Named problem instances and random MDP generators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classes import ComparatorClass, QClass, RewardClass
from .mdp import TabularMdp, bellman_operator, optimal_q

S1, S2 = 0, 1
A1, A2 = 0, 1


@dataclass(frozen=True, eq=False)
class HardCaseBundle:
    """Two-step instance on which fitting the reward model first gets trapped.

    State 0 is the start state, state 1 the only second-step state; both actions
    at the start lead to state 1. Cells never visited (step 1 at state 1, step 2
    at state 0) carry zero reward and values chosen so that the classes are
    exactly realizable and complete in sup-norm over all cells.
    """

    mdp: TabularMdp
    q_class: QClass
    r_class: RewardClass
    g_class: ComparatorClass


# (first-step value at s1, second-step values at s2 for a1, a2)
_Q_VALUES = {
    1: (0.40, 0.20, 0.19),
    2: (0.20, 0.20, 0.19),
    3: (0.59, 0.38, 0.39),
    4: (0.39, 0.38, 0.39),
}
_R_VALUES = {
    1: (0.20, 0.20, 0.19),
    2: (0.00, 0.38, 0.39),
}


def _two_step_table(first: float, second_a1: float, second_a2: float, unvisited_first: float) -> np.ndarray:
    table = np.zeros((2, 2, 2))
    table[0, S1, :] = first
    table[0, S2, :] = unvisited_first
    table[1, S2] = [second_a1, second_a2]
    return table


def build_hard_case() -> HardCaseBundle:
    """The two-step instance with ground-truth reward R^1 and classes {Q^1..Q^4}, {R^1, R^2}."""
    q_tables = [_two_step_table(v0, v1, v2, max(v1, v2)) for v0, v1, v2 in _Q_VALUES.values()]
    r_tables = [_two_step_table(v0, v1, v2, 0.0) for v0, v1, v2 in _R_VALUES.values()]
    transitions = np.zeros((1, 2, 2, 2))
    transitions[0, :, :, S2] = 1.0
    mdp = TabularMdp(transitions, [1.0, 0.0], r_tables[0])
    q_class = QClass(q_tables)
    return HardCaseBundle(mdp, q_class, RewardClass(r_tables), ComparatorClass.from_members(q_class))


@dataclass(frozen=True, eq=False)
class ReluFamily:
    """Two-step instance whose first-step reward is a hinge of ``<a, v>``.

    State 0 is the start; state ``i + 1`` is the packed direction ``theta_i``, which
    is also action ``i``. Taking action ``i`` at the start moves to state ``i + 1``.
    """

    theta: np.ndarray
    epsilon: float
    hidden_index: int
    mdp: TabularMdp

    @property
    def b(self) -> float:
        return 1.0 - self.epsilon

    @property
    def num_arms(self) -> int:
        return len(self.theta)

    @property
    def dimension(self) -> int:
        return self.theta.shape[1]

    def arm_value(self, arm: int) -> float:
        """``J`` of any policy whose first action is ``arm``."""
        return 2.0 / 3.0 + self.epsilon / 3.0 * float(arm == self.hidden_index)


def sphere_packing(d: int, epsilon: float, max_n: int, rng: np.random.Generator, max_failures: int = 10_000) -> np.ndarray:
    """Greedy rejection packing of unit vectors with pairwise inner products ``<= 1 - epsilon``.

    For ``d = 1`` the answer is ``{+1, -1}``. Stops at ``max_n`` points or after
    ``max_failures`` consecutive rejections.
    """
    if d < 1 or not 0 < epsilon < 1:
        raise ValueError("need d >= 1 and 0 < epsilon < 1")
    if d == 1:
        return np.array([[1.0], [-1.0]])[:max_n]
    bound = 1.0 - epsilon
    points: list[np.ndarray] = []
    failures = 0
    while len(points) < max_n and failures < max_failures:
        x = rng.standard_normal(d)
        x /= np.linalg.norm(x)
        if all(x @ p <= bound for p in points):
            points.append(x)
            failures = 0
        else:
            failures += 1
    return np.array(points)


def relu_rewards(theta: np.ndarray, epsilon: float, v: int) -> np.ndarray:
    """Mean-reward table ``(2, N + 1, N)`` of the member indexed by hidden direction ``v``."""
    n = len(theta)
    b = 1.0 - epsilon
    dots = theta @ theta[v]
    dots = np.clip(dots, -1.0, 1.0)
    reward = np.zeros((2, n + 1, n))
    reward[0, :, :] = (np.maximum(dots - b, 0.0) + dots + 1.0) / 3.0
    reward[1, 1:, :] = ((1.0 - dots) / 3.0)[:, None]
    return np.clip(reward, 0.0, 1.0)


def _relu_transitions(n: int) -> np.ndarray:
    trans = np.zeros((1, n + 1, n, n + 1))
    for a in range(n):
        trans[0, :, a, a + 1] = 1.0
    return trans


def build_relu_family(theta: np.ndarray, epsilon: float = 1.0 / 3.0, hidden_index: int = 0) -> ReluFamily:
    theta = np.asarray(theta, dtype=float)
    n = len(theta)
    if not 0 <= hidden_index < n:
        raise ValueError("hidden_index out of range")
    gram = theta @ theta.T
    if np.any(np.abs(np.diag(gram) - 1.0) > 1e-12):
        raise ValueError("packing vectors must be unit norm")
    if np.any(gram[~np.eye(n, dtype=bool)] > 1.0 - epsilon + 1e-12):
        raise ValueError("packing violates the pairwise inner-product bound")
    initial = np.zeros(n + 1)
    initial[0] = 1.0
    mdp = TabularMdp(_relu_transitions(n), initial, relu_rewards(theta, epsilon, hidden_index))
    return ReluFamily(theta, float(epsilon), int(hidden_index), mdp)


def relu_q_class(family: ReluFamily) -> QClass:
    """Optimal Q-functions of every member of the family (realizable by construction)."""
    tables = []
    for v in range(family.num_arms):
        member = TabularMdp(family.mdp.transitions, family.mdp.initial_dist, relu_rewards(family.theta, family.epsilon, v))
        tables.append(optimal_q(member))
    return QClass(tables)


def relu_comparator_class(family: ReluFamily, F: QClass) -> ComparatorClass:
    """``F`` plus every ``T_{R^u} f`` for members ``u`` of the family (complete)."""
    backups = []
    for u in range(family.num_arms):
        reward = relu_rewards(family.theta, family.epsilon, u)
        backups.extend(bellman_operator(family.mdp, f, reward) for f in F)
    return ComparatorClass.from_members(F.tables, np.array(backups))


def _normalized_rewards(rng: np.random.Generator, shape, reward_scale: float) -> np.ndarray:
    raw = rng.uniform(0.0, 1.0, size=shape)
    H = shape[0]
    return reward_scale * raw / (H * raw.max())


def build_random_tabular(
    num_states: int,
    num_actions: int,
    horizon: int,
    reward_scale: float = 1.0,
    seed: int = 0,
    fixed_start: bool = False,
) -> TabularMdp:
    """Dirichlet(1) transitions and uniform rewards scaled so every path totals at most 1."""
    if not 0 <= reward_scale <= 1:
        raise ValueError("reward_scale must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    S, A, H = num_states, num_actions, horizon
    trans = rng.dirichlet(np.ones(S), size=(H - 1, S, A))
    if fixed_start:
        initial = np.zeros(S)
        initial[0] = 1.0
    else:
        initial = rng.dirichlet(np.ones(S))
    reward = _normalized_rewards(rng, (H, S, A), reward_scale)
    return TabularMdp(trans, initial, reward)


def build_deterministic_chain(
    length: int,
    num_actions: int,
    seed: int = 0,
    horizon: int | None = None,
    random_start: bool = False,
) -> TabularMdp:
    """Layered MDP over ``length`` states with a seeded deterministic successor per (h, s, a).

    Action 0 always advances along the chain (``s -> s + 1``, staying at the end);
    the other actions jump to seeded random states. The horizon defaults to ``length``.
    """
    if length < 2:
        raise ValueError("length must be at least 2")
    rng = np.random.default_rng(seed)
    S, A = length, num_actions
    H = length if horizon is None else horizon
    trans = np.zeros((H - 1, S, A, S))
    successors = rng.integers(S, size=(H - 1, S, A))
    successors[:, :, 0] = np.minimum(np.arange(S) + 1, S - 1)[None, :]
    np.put_along_axis(trans, successors[..., None], 1.0, axis=-1)
    if random_start:
        initial = np.full(S, 1.0 / S)
    else:
        initial = np.zeros(S)
        initial[0] = 1.0
    reward = _normalized_rewards(rng, (H, S, A), 1.0)
    return TabularMdp(trans, initial, reward)
