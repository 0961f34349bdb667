"""Optimistic learners for outcome and preference feedback, plus two baselines.

All learners enumerate finite classes exactly. Losses are sums over the dataset,
so each loop keeps per-candidate running sums and updates them with every new
batch instead of re-scanning the whole history.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .classes import ComparatorClass, QClass, RewardClass, greedy_policy, induced_rewards
from .losses import Dataset, logistic_loss, trajectory_rewards
from .mdp import (
    OutcomeSample,
    Policy,
    PreferenceSample,
    ProcessSample,
    TabularMdp,
    compose,
    optimal_q,
    policy_q,
    sample_outcome_reward,
    sample_preference,
    sample_process_rewards,
    sample_trajectory,
    state_values,
)

# Objective values closer than this are treated as ties (guards against float
# rounding deciding between analytically equal candidates).
TIE_TOL = 1e-9


@dataclass
class AlgoConfig:
    lam: float = 1.0
    iterations: int = 100
    beta_btl: float = 1.0
    beta_conf: float = 1.0
    seed: int = 0
    ref_policy: Policy | None = None
    outcome_noise: str = "bernoulli"
    noise_sigma: float = 0.1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.beta_btl <= 0:
            raise ValueError("beta_btl must be positive")
        if self.beta_conf < 0:
            raise ValueError("beta_conf must be nonnegative")

    def reference(self, mdp: TabularMdp) -> Policy:
        if self.ref_policy is None:
            return Policy.constant(mdp.horizon, mdp.num_states, 0)
        return self.ref_policy


@dataclass
class IterationRecord:
    t: int
    f_index: int
    r_index: int | None
    suboptimality: float
    episodes: int


@dataclass
class RunTrace:
    algorithm: str
    records: list[IterationRecord] = field(default_factory=list)
    policies: list[Policy] = field(default_factory=list)
    visits: np.ndarray | None = None
    dataset: Dataset | None = field(default=None, repr=False)
    final_f_index: int | None = None

    @property
    def suboptimalities(self) -> np.ndarray:
        return np.array([r.suboptimality for r in self.records])

    @property
    def output_suboptimality(self) -> float:
        """Suboptimality of the uniform mixture over all executed greedy policies."""
        return float(self.suboptimalities.mean())

    @property
    def total_episodes(self) -> int:
        return sum(r.episodes for r in self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "suboptimality", "f_index", "r_index", "episodes"])
        for r in self.records:
            r_index = "" if r.r_index is None else r.r_index
            # 15 decimals: removes float noise such as 0.4 - 0.39 while staying exact to 1e-15
            writer.writerow([r.t, repr(round(float(r.suboptimality), 15)), r.f_index, r_index, r.episodes])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "records": [vars(r) for r in self.records],
            "output_suboptimality": self.output_suboptimality,
            "total_episodes": self.total_episodes,
            "final_f_index": self.final_f_index,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


class _BellmanStats:
    """Running Bellman losses for every (f, R) pair against a product comparator.

    With ``rewards=None`` the per-step rewards come from the observed labels.
    """

    def __init__(self, F: np.ndarray, rewards: np.ndarray | None, G: ComparatorClass):
        self.F = F
        self.rewards = rewards
        self.G = G
        n_r = 1 if rewards is None else len(rewards)
        self.own = np.zeros((len(F), n_r))
        self.comp = [np.zeros((len(F), n_r, len(g))) for g in G.steps]

    def add(self, states: np.ndarray, actions: np.ndarray, labels: np.ndarray | None = None):
        F = self.F
        H = F.shape[1]
        for h in range(H):
            s, a = states[:, h], actions[:, h]
            q = F[:, h, s, a]
            r = labels[None, :, h] if self.rewards is None else self.rewards[:, h, s, a]
            if h < H - 1:
                nxt = F[:, h + 1, states[:, h + 1]].max(axis=-1)
            else:
                nxt = np.zeros_like(q)
            target = r[None, :, :] + nxt[:, None, :]
            self.own += np.sum((q[:, None, :] - target) ** 2, axis=-1)
            g = self.G.steps[h][:, s, a]
            self.comp[h] += np.sum((g[None, None] - target[:, :, None, :]) ** 2, axis=-1)

    def loss(self) -> np.ndarray:
        return self.own - sum(c.min(axis=2) for c in self.comp)


def _argmax_first(values: np.ndarray, tol: float = TIE_TOL) -> tuple[int, ...]:
    """Argmax with ties (within ``tol``) broken toward the lowest C-order index."""
    flat = values.ravel()
    idx = int(np.flatnonzero(flat >= flat.max() - tol)[0])
    return tuple(int(i) for i in np.unravel_index(idx, values.shape))


def _argmin_last(values: np.ndarray, tol: float = TIE_TOL) -> int:
    """Argmin over a vector with ties broken toward the highest index."""
    return int(np.flatnonzero(values <= values.min() + tol)[-1])


def _fixed_start(mdp: TabularMdp) -> int:
    s1 = mdp.fixed_start
    if s1 is None:
        raise ValueError("this learner requires a fixed initial state")
    return s1


def _check_classes(mdp: TabularMdp, F: QClass, R: RewardClass | None = None, G: ComparatorClass | None = None):
    if len(F) == 0 or (R is not None and len(R) == 0):
        raise ValueError("function classes must be nonempty")
    if F.shape != mdp.shape or (R is not None and R.shape != mdp.shape):
        raise ValueError("class tables do not match the MDP shape")
    if G is not None:
        if G.horizon != mdp.horizon:
            raise ValueError("comparator class horizon does not match the MDP")
        if not all(G.contains(f) for f in F):
            raise ValueError("comparator class must contain every member of the Q-class")


class _Evaluator:
    """Memoised exact policy values."""

    def __init__(self, mdp: TabularMdp):
        self.mdp = mdp
        self.v_star = optimal_q(mdp)[0].max(axis=1)
        self._cache: dict[bytes, np.ndarray] = {}

    def values(self, policy: Policy) -> np.ndarray:
        key = policy.table.tobytes()
        if key not in self._cache:
            self._cache[key] = state_values(policy_q(self.mdp, policy), policy)[0]
        return self._cache[key]

    def start_gap(self, policy: Policy, s1: int) -> float:
        return float(self.v_star[s1] - self.values(policy)[s1])

    def gap(self, policy: Policy) -> float:
        rho = self.mdp.initial_dist
        return float(rho @ self.v_star - rho @ self.values(policy))


def _stack(trajs):
    return np.stack([t.states for t in trajs]), np.stack([t.actions for t in trajs])


def joint_objective(F: QClass, R: RewardClass, G: ComparatorClass, D: Dataset, lam: float, s1: int) -> np.ndarray:
    """``lam f_1(s_1) - L_BE(f; R) - L_RM(R)`` for every pair, shape ``(|F|, |R|)``."""
    stats = _BellmanStats(F.tables, R.tables, G)
    rm = np.zeros(len(R))
    if len(D):
        states, actions = D.trajectory_arrays()
        stats.add(states, actions)
        pred = trajectory_rewards(R.tables, states, actions)
        rm = np.sum((pred - D.outcome_rewards()[None]) ** 2, axis=1)
    values = F.tables[:, 0, s1].max(axis=-1)
    return lam * values[:, None] - stats.loss() - rm[None, :]


def joint_optimize(F: QClass, R: RewardClass, G: ComparatorClass, D: Dataset, lam: float, s1: int) -> tuple[int, int]:
    """Optimistic joint selection; ties go to the lexicographically smallest pair."""
    if len(F) == 0 or len(R) == 0:
        raise ValueError("function classes must be nonempty")
    return _argmax_first(joint_objective(F, R, G, D, lam, s1))


def run_algorithm1(mdp: TabularMdp, F: QClass, R: RewardClass, G: ComparatorClass, cfg: AlgoConfig) -> RunTrace:
    """Joint optimism over (Q-function, reward model) with outcome feedback.

    Each iteration collects H episodes, one per roll-in length, each following the
    greedy policy for ``h`` steps and the reference policy afterwards.
    """
    _check_classes(mdp, F, R, G)
    s1 = _fixed_start(mdp)
    rng = np.random.default_rng(cfg.seed)
    ref = cfg.reference(mdp)
    ev = _Evaluator(mdp)
    H = mdp.horizon
    stats = _BellmanStats(F.tables, R.tables, G)
    rm = np.zeros(len(R))
    values = F.tables[:, 0, s1].max(axis=-1)
    trace = RunTrace("algorithm1", visits=np.zeros(mdp.shape, dtype=np.int64), dataset=Dataset("outcome"))

    for t in range(1, cfg.iterations + 1):
        objective = cfg.lam * values[:, None] - stats.loss() - rm[None, :]
        i, j = _argmax_first(objective)
        policy = greedy_policy(F[i])
        trajs, outcomes = [], []
        for h in range(1, H + 1):
            tau = sample_trajectory(mdp, compose(policy, ref, h), rng)
            r = sample_outcome_reward(mdp, tau, rng, cfg.outcome_noise, cfg.noise_sigma)
            trajs.append(tau)
            outcomes.append(r)
            trace.dataset.append(OutcomeSample(tau, r))
        states, actions = _stack(trajs)
        stats.add(states, actions)
        rm += np.sum((trajectory_rewards(R.tables, states, actions) - np.array(outcomes)[None]) ** 2, axis=1)
        _count(trace.visits, states, actions)
        trace.policies.append(policy)
        trace.records.append(IterationRecord(t, i, j, ev.start_gap(policy, s1), H))
    return trace


def run_algorithm2(mdp: TabularMdp, F: QClass, cfg: AlgoConfig) -> RunTrace:
    """Optimism with the Bellman-residual loss on deterministic dynamics.

    The initial state may be random; suboptimality is measured at each drawn start.
    """
    if not mdp.is_deterministic():
        raise ValueError("algorithm 2 requires deterministic transitions")
    _check_classes(mdp, F)
    rng = np.random.default_rng(cfg.seed)
    ev = _Evaluator(mdp)
    residual = np.zeros(len(F))
    trace = RunTrace("algorithm2", visits=np.zeros(mdp.shape, dtype=np.int64), dataset=Dataset("outcome"))

    for t in range(1, cfg.iterations + 1):
        s1 = int(np.searchsorted(np.cumsum(mdp.initial_dist), rng.random(), side="right"))
        s1 = min(s1, mdp.num_states - 1)
        objective = cfg.lam * F.tables[:, 0, s1].max(axis=-1) - residual
        (i,) = _argmax_first(objective)
        policy = greedy_policy(F[i])
        tau = sample_trajectory(mdp, policy, rng, start_state=s1)
        r = sample_outcome_reward(mdp, tau, rng, cfg.outcome_noise, cfg.noise_sigma)
        trace.dataset.append(OutcomeSample(tau, r))
        residual += (induced_rewards(F.tables, tau.states[None], tau.actions[None])[:, 0] - r) ** 2
        _count(trace.visits, tau.states[None], tau.actions[None])
        trace.policies.append(policy)
        trace.records.append(IterationRecord(t, i, None, ev.start_gap(policy, s1), 1))
    return trace


def run_algorithm3(mdp: TabularMdp, F: QClass, R: RewardClass, G: ComparatorClass, cfg: AlgoConfig) -> RunTrace:
    """Joint optimism with Bradley-Terry preference feedback.

    For each roll-in length the preferred-candidate trajectory follows the greedy
    policy then the reference; the comparison trajectory follows the reference
    policy throughout. The Bellman loss uses the former trajectories.
    """
    _check_classes(mdp, F, R, G)
    s1 = _fixed_start(mdp)
    rng = np.random.default_rng(cfg.seed)
    ref = cfg.reference(mdp)
    ev = _Evaluator(mdp)
    H = mdp.horizon
    stats = _BellmanStats(F.tables, R.tables, G)
    pref_loss = np.zeros(len(R))
    ref_sum = np.zeros(len(R))
    n_pairs = 0
    values = F.tables[:, 0, s1].max(axis=-1)
    trace = RunTrace("algorithm3", visits=np.zeros(mdp.shape, dtype=np.int64), dataset=Dataset("preference"))

    for t in range(1, cfg.iterations + 1):
        v_ref = ref_sum / n_pairs if n_pairs else np.zeros(len(R))
        objective = cfg.lam * (values[:, None] - v_ref[None, :]) - stats.loss() - pref_loss[None, :]
        i, j = _argmax_first(objective)
        policy = greedy_policy(F[i])
        plus, minus, ys = [], [], []
        for h in range(1, H + 1):
            tau_plus = sample_trajectory(mdp, compose(policy, ref, h), rng)
            tau_minus = sample_trajectory(mdp, ref, rng)
            y = sample_preference(mdp, tau_plus, tau_minus, cfg.beta_btl, rng)
            plus.append(tau_plus)
            minus.append(tau_minus)
            ys.append(y)
            trace.dataset.append(PreferenceSample(tau_plus, tau_minus, y))
        sp, ap = _stack(plus)
        sm, am = _stack(minus)
        stats.add(sp, ap)
        r_minus = trajectory_rewards(R.tables, sm, am)
        w = trajectory_rewards(R.tables, sp, ap) - r_minus
        pref_loss += logistic_loss(w, np.array(ys, dtype=float)[None], cfg.beta_btl).sum(axis=1)
        ref_sum += r_minus.sum(axis=1)
        n_pairs += H
        _count(trace.visits, sp, ap)
        _count(trace.visits, sm, am)
        trace.policies.append(policy)
        trace.records.append(IterationRecord(t, i, j, ev.start_gap(policy, s1), H))
    return trace


def run_fitted_reward_baseline(
    mdp: TabularMdp, F: QClass, R: RewardClass, G: ComparatorClass, cfg: AlgoConfig
) -> RunTrace:
    """Fit a reward model first, then run one optimistic confidence-set step on it.

    The reward fit breaks ties toward the highest index. Each new trajectory is
    relabelled with the current fitted per-step rewards; older labels are kept.
    """
    _check_classes(mdp, F, R, G)
    s1 = _fixed_start(mdp)
    rng = np.random.default_rng(cfg.seed)
    ev = _Evaluator(mdp)
    stats = _BellmanStats(F.tables, None, G)
    rm = np.zeros(len(R))
    values = F.tables[:, 0, s1].max(axis=-1)
    trace = RunTrace("fitted_baseline", visits=np.zeros(mdp.shape, dtype=np.int64), dataset=Dataset("process"))
    H = mdp.horizon

    for t in range(1, cfg.iterations + 1):
        confident = stats.loss()[:, 0] <= cfg.beta_conf + TIE_TOL
        if not confident.any():
            raise RuntimeError(
                f"empty confidence set at iteration {t}: beta_conf={cfg.beta_conf} is too small"
            )
        (i,) = _argmax_first(np.where(confident, values, -np.inf))
        policy = greedy_policy(F[i])
        tau = sample_trajectory(mdp, policy, rng)
        r = sample_outcome_reward(mdp, tau, rng, cfg.outcome_noise, cfg.noise_sigma)
        rm += (trajectory_rewards(R.tables, tau.states[None], tau.actions[None])[:, 0] - r) ** 2
        k = _argmin_last(rm)
        labels = np.array(R.tables[k][np.arange(H), tau.states, tau.actions])
        stats.add(tau.states[None], tau.actions[None], labels[None])
        trace.dataset.append(ProcessSample(tau, labels))
        _count(trace.visits, tau.states[None], tau.actions[None])
        trace.policies.append(policy)
        trace.records.append(IterationRecord(t, i, k, ev.start_gap(policy, s1), 1))
    return trace


def run_process_reward_baseline(mdp: TabularMdp, F: QClass, G: ComparatorClass, cfg: AlgoConfig) -> RunTrace:
    """Optimism over ``F`` with the Bellman loss on observed per-step rewards.

    One episode per iteration. ``final_f_index`` is the selection given all data,
    i.e. the policy this learner would return.
    """
    _check_classes(mdp, F, None, G)
    s1 = _fixed_start(mdp)
    rng = np.random.default_rng(cfg.seed)
    ev = _Evaluator(mdp)
    stats = _BellmanStats(F.tables, None, G)
    values = F.tables[:, 0, s1].max(axis=-1)
    trace = RunTrace("process_baseline", visits=np.zeros(mdp.shape, dtype=np.int64), dataset=Dataset("process"))

    for t in range(1, cfg.iterations + 1):
        (i,) = _argmax_first(cfg.lam * values - stats.loss()[:, 0])
        policy = greedy_policy(F[i])
        tau = sample_trajectory(mdp, policy, rng)
        labels = sample_process_rewards(mdp, tau)
        stats.add(tau.states[None], tau.actions[None], labels[None])
        trace.dataset.append(ProcessSample(tau, labels))
        _count(trace.visits, tau.states[None], tau.actions[None])
        trace.policies.append(policy)
        trace.records.append(IterationRecord(t, i, None, ev.start_gap(policy, s1), 1))
    (trace.final_f_index,) = _argmax_first(cfg.lam * values - stats.loss()[:, 0])
    return trace


def _count(visits: np.ndarray, states: np.ndarray, actions: np.ndarray) -> None:
    H = visits.shape[0]
    np.add.at(visits, (np.broadcast_to(np.arange(H), states.shape), states, actions), 1)
