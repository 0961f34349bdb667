"""Finite function classes for value functions, rewards and Bellman comparators."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .mdp import Policy, TabularMdp, Trajectory, bellman_operator, optimal_q

RANGE_TOL = 1e-12


def _stack(members, name: str) -> np.ndarray:
    tables = np.array(members, dtype=float, copy=True)
    if tables.ndim != 4 or len(tables) == 0:
        raise ValueError(f"{name} must be a nonempty list of (H, S, A) tables")
    tables.setflags(write=False)
    return tables


@dataclass(frozen=True, eq=False)
class TableClass:
    """Ordered, finite list of ``(H, S, A)`` tables with values in [0, 1]."""

    tables: np.ndarray

    def __post_init__(self):
        tables = _stack(self.tables, type(self).__name__)
        if np.any(tables < -RANGE_TOL) or np.any(tables > 1 + RANGE_TOL):
            raise ValueError(f"{type(self).__name__} members must take values in [0, 1]")
        object.__setattr__(self, "tables", tables)

    def __len__(self):
        return len(self.tables)

    def __getitem__(self, i):
        return self.tables[i]

    def __iter__(self):
        return iter(self.tables)

    @property
    def shape(self):
        return self.tables.shape[1:]

    def to_json(self) -> str:
        return json.dumps(self.tables.tolist())

    @classmethod
    def from_json(cls, text: str):
        doc = json.loads(text)
        if isinstance(doc, dict):
            doc = doc["members"]
        return cls(doc)


class QClass(TableClass):
    """Candidate optimal Q-functions; each member is one joint ``(f_1, ..., f_H)``."""


class RewardClass(TableClass):
    """Candidate mean-reward functions."""


@dataclass(frozen=True, eq=False)
class ComparatorClass:
    """Product comparator class ``G = G_1 x ... x G_H``.

    ``steps[h]`` holds the distinct candidate tables for step ``h`` with shape
    ``(n_h, S, A)``. Joint members are the cartesian product, enumerated in
    lexicographic order by :attr:`members`.
    """

    steps: tuple

    def __post_init__(self):
        steps = []
        for g in self.steps:
            g = np.array(g, dtype=float, copy=True)
            if g.ndim != 3 or len(g) == 0:
                raise ValueError("each comparator step must be a nonempty (n, S, A) array")
            g.setflags(write=False)
            steps.append(g)
        object.__setattr__(self, "steps", tuple(steps))

    @classmethod
    def from_members(cls, *classes) -> "ComparatorClass":
        """Per-step closure of the given joint tables (duplicates removed, order kept)."""
        tables = np.concatenate([np.asarray(getattr(c, "tables", c), dtype=float) for c in classes])
        steps = []
        for h in range(tables.shape[1]):
            _, first = np.unique(tables[:, h].reshape(len(tables), -1), axis=0, return_index=True)
            steps.append(tables[np.sort(first), h])
        return cls(tuple(steps))

    @property
    def horizon(self) -> int:
        return len(self.steps)

    def __len__(self):
        return int(np.prod([len(g) for g in self.steps]))

    @property
    def members(self):
        for combo in itertools.product(*(range(len(g)) for g in self.steps)):
            yield np.stack([self.steps[h][i] for h, i in enumerate(combo)])

    def contains(self, f: np.ndarray, atol: float = 1e-12) -> bool:
        return all(
            np.any(np.all(np.abs(g - f[h]) <= atol, axis=(1, 2))) for h, g in enumerate(self.steps)
        )

    def to_json(self) -> str:
        return json.dumps([g.tolist() for g in self.steps])


def greedy_policy(f: np.ndarray) -> Policy:
    """Greedy policy of ``f``; ties go to the lowest action index."""
    return Policy(np.argmax(np.asarray(f), axis=2))


def greedy_value(f: np.ndarray, state: int) -> float:
    """``f_1(s) = max_a f_1(s, a)``."""
    return float(np.max(np.asarray(f)[0, state]))


def _sup_dist(tables: np.ndarray, target: np.ndarray) -> np.ndarray:
    return np.abs(tables - target[None]).max(axis=(2, 3))


def check_realizability(mdp: TabularMdp, F: QClass, R: RewardClass) -> tuple[float, float]:
    """Smallest ``max_h ||f_h - Q*_h||_inf`` over ``F`` and the same for ``R`` against ``R*``."""
    eps_q = _sup_dist(F.tables, optimal_q(mdp)).max(axis=1).min()
    eps_r = _sup_dist(R.tables, mdp.mean_reward).max(axis=1).min()
    return float(eps_q), float(eps_r)


def check_completeness(mdp: TabularMdp, F: QClass, R: RewardClass, G: ComparatorClass) -> float:
    """``max_{f, R, h} min_{g_h in G_h} ||T_{R,h} f_{h+1} - g_h||_inf``."""
    worst = 0.0
    for f in F:
        for reward in R:
            backup = bellman_operator(mdp, f, reward)
            for h, g in enumerate(G.steps):
                gap = np.abs(g - backup[h][None]).max(axis=(1, 2)).min()
                worst = max(worst, float(gap))
    return worst


def comparator_closure(mdp: TabularMdp, F: QClass, R: RewardClass) -> ComparatorClass:
    """``G_h = F_h`` together with every ``T_{R,h} f_{h+1}``; complete by construction."""
    backups = [bellman_operator(mdp, f, reward) for f in F for reward in R]
    return ComparatorClass.from_members(F.tables, np.array(backups))


def induced_reward_model(f: np.ndarray, traj: Trajectory) -> float:
    """Telescoped outcome reward ``sum_h f_h(s_h, a_h) - max_a f_{h+1}(s_{h+1}, a)``."""
    return float(induced_rewards(np.asarray(f)[None], traj.states[None], traj.actions[None])[0, 0])


def induced_rewards(tables: np.ndarray, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Vectorised induced rewards: ``(n_f, n_traj)`` for tables ``(n_f, H, S, A)``."""
    n, H = states.shape
    steps = np.arange(H)
    q_sa = tables[:, steps[None, :], states, actions]  # (n_f, n, H)
    out = q_sa.sum(axis=2)
    if H > 1:
        next_v = tables[:, steps[None, 1:], states[:, 1:]].max(axis=-1)  # (n_f, n, H-1)
        out = out - next_v.sum(axis=2)
    return out


# Generators ------------------------------------------------------------------


def perturbed_optimal_class(
    mdp: TabularMdp, size: int, scale: float, seed: int, position: int | None = None
) -> QClass:
    """``{Q*}`` plus ``size - 1`` copies of ``Q*`` with uniform noise, clipped to [0, 1].

    ``Q*`` sits at ``position`` (drawn from the seed when None) so that lowest-index
    tie-breaking does not favour it.
    """
    rng = np.random.default_rng(seed)
    q = optimal_q(mdp)
    noisy = np.clip(q[None] + rng.uniform(-scale, scale, size=(size - 1, *q.shape)), 0.0, 1.0)
    if position is None:
        position = int(rng.integers(size))
    return QClass(np.insert(noisy, position, q, axis=0))


def perturbed_reward_class(
    mdp: TabularMdp, size: int, scale: float, seed: int, position: int | None = None
) -> RewardClass:
    rng = np.random.default_rng(seed)
    r = mdp.mean_reward
    noisy = np.clip(r[None] + rng.uniform(-scale, scale, size=(size - 1, *r.shape)), 0.0, 1.0)
    if position is None:
        position = int(rng.integers(size))
    return RewardClass(np.insert(noisy, position, r, axis=0))


def random_q_class(shape, size: int, seed: int) -> QClass:
    rng = np.random.default_rng(seed)
    return QClass(rng.uniform(0.0, 1.0, size=(size, *shape)))


def random_reward_class(shape, size: int, seed: int) -> RewardClass:
    rng = np.random.default_rng(seed)
    return RewardClass(rng.uniform(0.0, 1.0, size=(size, *shape)) / shape[0])
