"""Finite-horizon tabular MDPs, exact dynamic-programming oracles and feedback channels.

Conventions used throughout the package:

* steps are 0-based in code: ``h = 0`` is the first step, ``h = H - 1`` the last;
* value tables are arrays of shape ``(H, S, A)``; the value after the last step is 0;
* ``transitions[h, s, a]`` is the next-state distribution after step ``h`` and has
  shape ``(H - 1, S, A, S)``;
* policies are deterministic and Markov, stored as an ``(H, S)`` integer table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import expit

NORMALIZATION_TOL = 1e-9
PROB_TOL = 1e-12


def _frozen(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """A finite-horizon MDP with mean rewards.

    The constructor validates every invariant: stochastic transition rows, a
    probability vector for the initial distribution, per-step rewards in
    ``[0, 1]``, and total reward in ``[0, 1]`` along every trajectory that is
    reachable with positive probability.
    """

    transitions: np.ndarray
    initial_dist: np.ndarray
    mean_reward: np.ndarray

    def __post_init__(self):
        trans = _frozen(self.transitions)
        rho = _frozen(self.initial_dist)
        reward = _frozen(self.mean_reward)
        object.__setattr__(self, "transitions", trans)
        object.__setattr__(self, "initial_dist", rho)
        object.__setattr__(self, "mean_reward", reward)

        if reward.ndim != 3:
            raise ValueError("mean_reward must have shape (H, S, A)")
        H, S, A = reward.shape
        if H < 1 or S < 1 or A < 1:
            raise ValueError("horizon, num_states and num_actions must be positive")
        if trans.shape != (H - 1, S, A, S):
            raise ValueError(f"transitions must have shape {(H - 1, S, A, S)}, got {trans.shape}")
        if rho.shape != (S,):
            raise ValueError(f"initial_dist must have shape ({S},)")
        if np.any(trans < 0) or np.any(np.abs(trans.sum(axis=-1) - 1.0) > PROB_TOL):
            raise ValueError("every transition row must be a probability vector")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > PROB_TOL:
            raise ValueError("initial_dist must be a probability vector")
        if np.any(reward < 0) or np.any(reward > 1):
            raise ValueError("mean rewards must lie in [0, 1]")
        lo, hi = self.reachable_return_range()
        if lo < -NORMALIZATION_TOL or hi > 1 + NORMALIZATION_TOL:
            raise ValueError(
                f"total reward of reachable trajectories spans [{lo}, {hi}], not within [0, 1]"
            )

    @property
    def horizon(self) -> int:
        return self.mean_reward.shape[0]

    @property
    def num_states(self) -> int:
        return self.mean_reward.shape[1]

    @property
    def num_actions(self) -> int:
        return self.mean_reward.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.mean_reward.shape

    @property
    def fixed_start(self) -> int | None:
        """Index of the initial state when ``initial_dist`` is degenerate, else None."""
        support = np.flatnonzero(self.initial_dist > 0)
        return int(support[0]) if len(support) == 1 else None

    def is_deterministic(self) -> bool:
        return bool(np.all(np.count_nonzero(self.transitions, axis=-1) == 1))

    def reachable_return_range(self) -> tuple[float, float]:
        """Smallest and largest total reward over trajectories with positive probability."""
        H = self.horizon
        hi = np.zeros(self.num_states)
        lo = np.zeros(self.num_states)
        for h in range(H - 1, -1, -1):
            r = self.mean_reward[h]
            if h == H - 1:
                hi_sa, lo_sa = r, r
            else:
                reach = self.transitions[h] > 0
                hi_next = np.where(reach, hi[None, None, :], -np.inf).max(axis=-1)
                lo_next = np.where(reach, lo[None, None, :], np.inf).min(axis=-1)
                hi_sa, lo_sa = r + hi_next, r + lo_next
            hi, lo = hi_sa.max(axis=1), lo_sa.min(axis=1)
        start = self.initial_dist > 0
        return float(lo[start].min()), float(hi[start].max())

    def trajectory_reward(self, traj: "Trajectory") -> float:
        """Total mean reward ``R(tau) = sum_h R_h(s_h, a_h)``."""
        return float(self.mean_reward[np.arange(self.horizon), traj.states, traj.actions].sum())

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "horizon": self.horizon,
            "transitions": self.transitions.tolist(),
            "initial_dist": self.initial_dist.tolist(),
            "mean_reward": self.mean_reward.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularMdp":
        H, S, A = doc["horizon"], doc["num_states"], doc["num_actions"]
        trans = np.asarray(doc["transitions"], dtype=float).reshape(H - 1, S, A, S)
        mdp = cls(trans, doc["initial_dist"], doc["mean_reward"])
        if mdp.shape != (H, S, A):
            raise ValueError("declared sizes do not match the arrays")
        return mdp

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "TabularMdp":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """``tau = (s_1, a_1, ..., s_H, a_H)`` stored as two length-H index arrays."""

    states: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "states", _frozen(self.states, dtype=np.int64))
        object.__setattr__(self, "actions", _frozen(self.actions, dtype=np.int64))
        if self.states.shape != self.actions.shape or self.states.ndim != 1:
            raise ValueError("states and actions must be 1-d arrays of equal length")

    @classmethod
    def from_steps(cls, steps) -> "Trajectory":
        steps = list(steps)
        return cls([s for s, _ in steps], [a for _, a in steps])

    @property
    def steps(self) -> list[tuple[int, int]]:
        return list(zip(self.states.tolist(), self.actions.tolist()))

    def __len__(self):
        return len(self.states)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return np.array_equal(self.states, other.states) and np.array_equal(self.actions, other.actions)

    def __hash__(self):
        return hash((self.states.tobytes(), self.actions.tobytes()))

    def visits(self, h: int, s: int, a: int) -> bool:
        return bool(self.states[h] == s and self.actions[h] == a)


@dataclass(frozen=True, eq=False)
class Policy:
    """Deterministic Markov policy, ``table[h, s]`` is the action taken at step ``h`` in ``s``."""

    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "table", _frozen(self.table, dtype=np.int64))
        if self.table.ndim != 2:
            raise ValueError("policy table must have shape (H, S)")

    def __call__(self, h: int, s: int) -> int:
        return int(self.table[h, s])

    def __eq__(self, other):
        if not isinstance(other, Policy):
            return NotImplemented
        return np.array_equal(self.table, other.table)

    def __hash__(self):
        return hash(self.table.tobytes())

    @classmethod
    def constant(cls, horizon: int, num_states: int, action: int = 0) -> "Policy":
        return cls(np.full((horizon, num_states), action))


@dataclass(frozen=True, eq=False)
class ComposedPolicy(Policy):
    """``front`` for the first ``switch_step`` steps, then ``back``.

    ``switch_step`` counts steps, so ``switch_step = H`` is ``front`` itself. The
    composition of Markov policies is Markov, so the combined table is stored too.
    """

    front: Policy = field(default=None)
    back: Policy = field(default=None)
    switch_step: int = 0

    @classmethod
    def of(cls, front: Policy, back: Policy, switch_step: int) -> "ComposedPolicy":
        if front.table.shape != back.table.shape:
            raise ValueError("composed policies must share the same shape")
        if not 0 <= switch_step <= front.table.shape[0]:
            raise ValueError("switch_step out of range")
        table = np.array(back.table)
        table[:switch_step] = front.table[:switch_step]
        return cls(table, front, back, switch_step)


def compose(front: Policy, back: Policy, switch_step: int) -> ComposedPolicy:
    """``front o_h back``: follow ``front`` through step ``switch_step`` (1-based), then ``back``."""
    return ComposedPolicy.of(front, back, switch_step)


# Dynamic programming ---------------------------------------------------------


def _next_max(mdp: TabularMdp, values: np.ndarray, h: int) -> np.ndarray:
    """``E_{s'~T_h(s,a)} max_a' values[h+1](s', a')`` with the terminal convention."""
    if h == mdp.horizon - 1:
        return np.zeros(mdp.shape[1:])
    return mdp.transitions[h] @ values[h + 1].max(axis=1)


def bellman_operator(mdp: TabularMdp, f: np.ndarray, reward: np.ndarray | None = None) -> np.ndarray:
    """Apply ``T_{R,h}`` to ``f_{h+1}`` for every step: ``out[h] = R_h + E max_a' f_{h+1}``.

    ``reward`` defaults to the MDP's mean reward.
    """
    reward = mdp.mean_reward if reward is None else np.asarray(reward, dtype=float)
    f = np.asarray(f, dtype=float)
    return np.stack([reward[h] + _next_max(mdp, f, h) for h in range(mdp.horizon)])


def optimal_q(mdp: TabularMdp) -> np.ndarray:
    """Optimal Q-function by backward induction."""
    H = mdp.horizon
    q = np.zeros(mdp.shape)
    for h in range(H - 1, -1, -1):
        q[h] = mdp.mean_reward[h] + _next_max(mdp, q, h)
    return q


def optimal_value(mdp: TabularMdp) -> float:
    return float(mdp.initial_dist @ optimal_q(mdp)[0].max(axis=1))


def policy_q(mdp: TabularMdp, policy: Policy) -> np.ndarray:
    """``Q^pi`` as an ``(H, S, A)`` table."""
    H, S, _ = mdp.shape
    q = np.zeros(mdp.shape)
    for h in range(H - 1, -1, -1):
        q[h] = mdp.mean_reward[h]
        if h < H - 1:
            v_next = q[h + 1][np.arange(S), policy.table[h + 1]]
            q[h] = q[h] + mdp.transitions[h] @ v_next
    return q


def state_values(q: np.ndarray, policy: Policy) -> np.ndarray:
    """``V^pi_h(s) = Q^pi_h(s, pi_h(s))`` as an ``(H, S)`` array."""
    H, S, _ = q.shape
    return q[np.arange(H)[:, None], np.arange(S)[None, :], policy.table]


def policy_value(mdp: TabularMdp, policy: Policy) -> tuple[float, np.ndarray]:
    """Exact ``J(pi)`` and ``Q^pi``."""
    q = policy_q(mdp, policy)
    return float(mdp.initial_dist @ state_values(q, policy)[0]), q


def occupancy(mdp: TabularMdp, policy: Policy, initial_dist: np.ndarray | None = None) -> np.ndarray:
    """State-action occupancy ``d^pi_h(s, a)`` of shape ``(H, S, A)``."""
    H, S, A = mdp.shape
    dist = mdp.initial_dist if initial_dist is None else np.asarray(initial_dist, dtype=float)
    d = np.zeros((H, S, A))
    for h in range(H):
        d[h, np.arange(S), policy.table[h]] = dist
        if h < H - 1:
            dist = np.einsum("sa,sat->t", d[h], mdp.transitions[h])
    return d


def mixture_value(mdp: TabularMdp, policies) -> float:
    """Value of the uniform mixture over ``policies`` (one policy drawn per episode)."""
    d = np.mean([occupancy(mdp, p) for p in policies], axis=0)
    return float(np.sum(d * mdp.mean_reward))


# Sampling and feedback --------------------------------------------------------


def _draw(p: np.ndarray, rng: np.random.Generator) -> int:
    idx = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
    return min(idx, len(p) - 1)


def sample_trajectory(
    mdp: TabularMdp, policy: Policy, rng: np.random.Generator, start_state: int | None = None
) -> Trajectory:
    """Roll out ``policy`` for one episode; ``start_state`` overrides the draw from ``rho``."""
    H = mdp.horizon
    states = np.empty(H, dtype=np.int64)
    actions = np.empty(H, dtype=np.int64)
    s = _draw(mdp.initial_dist, rng) if start_state is None else int(start_state)
    for h in range(H):
        a = int(policy.table[h, s])
        states[h], actions[h] = s, a
        if h < H - 1:
            s = _draw(mdp.transitions[h, s, a], rng)
    return Trajectory(states, actions)


def sample_outcome_reward(
    mdp: TabularMdp,
    traj: Trajectory,
    rng: np.random.Generator,
    noise: str = "bernoulli",
    sigma: float = 0.1,
) -> float:
    """Draw an outcome reward with mean ``R(tau)``.

    ``noise="bernoulli"`` draws ``Bern(R(tau))``; ``"gaussian"`` adds N(0, sigma^2) and
    clips to [0, 1] (which biases the mean near the endpoints); ``"none"`` returns
    ``R(tau)`` itself.
    """
    mean = mdp.trajectory_reward(traj)
    if not -NORMALIZATION_TOL <= mean <= 1 + NORMALIZATION_TOL:
        raise ValueError(f"trajectory reward {mean} is outside [0, 1]")
    mean = min(max(mean, 0.0), 1.0)
    if noise == "bernoulli":
        return float(rng.random() < mean)
    if noise == "gaussian":
        return float(np.clip(mean + sigma * rng.standard_normal(), 0.0, 1.0))
    if noise == "none":
        return mean
    raise ValueError(f"unknown outcome noise channel {noise!r}")


def sample_process_rewards(mdp: TabularMdp, traj: Trajectory) -> np.ndarray:
    """Per-step rewards ``r_h = R_h(s_h, a_h)`` (noise-free process channel)."""
    return np.array(mdp.mean_reward[np.arange(mdp.horizon), traj.states, traj.actions])


def btl_probability(r_plus, r_minus, beta: float):
    """Bradley-Terry-Luce probability that the first trajectory is preferred."""
    return expit(beta * (np.asarray(r_plus, dtype=float) - np.asarray(r_minus, dtype=float)))


def sample_preference(
    mdp: TabularMdp, plus: Trajectory, minus: Trajectory, beta: float, rng: np.random.Generator
) -> int:
    p = btl_probability(mdp.trajectory_reward(plus), mdp.trajectory_reward(minus), beta)
    return int(rng.random() < p)


@dataclass(frozen=True)
class ProcessSample:
    trajectory: Trajectory
    rewards: np.ndarray

    kind = "process"


@dataclass(frozen=True)
class OutcomeSample:
    trajectory: Trajectory
    reward: float

    kind = "outcome"


@dataclass(frozen=True)
class PreferenceSample:
    plus: Trajectory
    minus: Trajectory
    y: int

    kind = "preference"

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ValueError("preference label must be 0 or 1")


FeedbackSample = Union[ProcessSample, OutcomeSample, PreferenceSample]


# Decomposition identities ------------------------------------------------------


def perf_diff_decomposition(
    mdp: TabularMdp, f: np.ndarray, reward_proxy: np.ndarray, policy: Policy
) -> tuple[float, float, float]:
    """Both sides of the trajectory-level performance-difference decomposition.

    Returns ``(lhs, bellman_term, reward_term)`` where

    * ``lhs = E_{s1} f_1(s_1, pi_1(s_1)) - J(pi)``, which is ``f_1(s_1) - V^pi(s_1)`` when
      ``pi`` is greedy for ``f``;
    * ``bellman_term = sum_h E^pi[f_h - T_{R',h} f_{h+1}]`` with the proxy reward ``R'``;
    * ``reward_term = E^pi[R'(tau) - R(tau)]``.

    ``lhs == bellman_term + reward_term`` whenever ``pi`` is greedy for ``f`` at
    steps 2..H (step 1 may be arbitrary).
    """
    f = np.asarray(f, dtype=float)
    reward_proxy = np.asarray(reward_proxy, dtype=float)
    d = occupancy(mdp, policy)
    J, _ = policy_value(mdp, policy)
    start = f[0][np.arange(mdp.num_states), policy.table[0]]
    lhs = float(mdp.initial_dist @ start) - J
    bellman_term = float(np.sum(d * (f - bellman_operator(mdp, f, reward_proxy))))
    reward_term = float(np.sum(d * (reward_proxy - mdp.mean_reward)))
    return lhs, bellman_term, reward_term


def _ref_tail_means(mdp: TabularMdp, D: np.ndarray, ref: Policy) -> np.ndarray:
    """``Dbar_h(s)`` for ``h = 0..H`` (0-based), zero at the first and terminal steps."""
    H, S, _ = mdp.shape
    tail = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        tail[h] = D[h][np.arange(S), ref.table[h]]
        if h < H - 1:
            tail[h] += mdp.transitions[h][np.arange(S), ref.table[h]] @ tail[h + 1]
    tail[0] = 0.0
    return tail


def trajectory_second_moment(mdp: TabularMdp, D: np.ndarray, policy: Policy) -> float:
    """``E^pi[D(tau)^2]`` for ``D(tau) = sum_h D_h(s_h, a_h)``, by backward DP on two moments."""
    H, S, _ = mdp.shape
    idx = np.arange(S)
    m1 = np.zeros(S)
    m2 = np.zeros(S)
    for h in range(H - 1, -1, -1):
        a = policy.table[h]
        x = D[h][idx, a]
        if h < H - 1:
            p = mdp.transitions[h][idx, a]
            e1, e2 = p @ m1, p @ m2
        else:
            e1, e2 = np.zeros(S), np.zeros(S)
        m1, m2 = x + e1, x * x + 2 * x * e1 + e2
    return float(mdp.initial_dist @ m2)


def traj_decomp_check(
    mdp: TabularMdp, D: np.ndarray, policy: Policy, ref: Policy
) -> tuple[float, float]:
    """Both sides of the roll-in/roll-out variance inequality, computed exactly.

    ``lhs = sum_h E^pi (D_h(s_h,a_h) + Dbar_{h+1}(s_{h+1}) - Dbar_h(s_h))^2`` and
    ``rhs = 4 sum_h E^{pi o_h ref} D(tau)^2``; the inequality is ``lhs <= rhs``.
    """
    D = np.asarray(D, dtype=float)
    H, S, A = mdp.shape
    tail = _ref_tail_means(mdp, D, ref)
    d = occupancy(mdp, policy)
    lhs = 0.0
    for h in range(H):
        base = D[h] - tail[h][:, None]
        if h < H - 1:
            # E_{s'}[(base + tail_{h+1}(s'))^2]
            nxt = tail[h + 1]
            p = mdp.transitions[h]
            sq = base**2 + 2 * base * (p @ nxt) + p @ nxt**2
        else:
            sq = base**2
        lhs += float(np.sum(d[h] * sq))
    rhs = 4 * sum(trajectory_second_moment(mdp, D, compose(policy, ref, h + 1)) for h in range(H))
    return lhs, rhs
