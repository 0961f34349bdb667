"""Empirical loss functionals over datasets of outcome, process and preference feedback.

Every loss here is a sum over samples, so it is additive over dataset
concatenation. Steps are 0-based; ``f_{H}`` (one past the last step) is zero.
"""

from __future__ import annotations

import numpy as np

from .classes import ComparatorClass, induced_rewards
from .mdp import FeedbackSample, PreferenceSample


class Dataset:
    """Append-only list of feedback samples of a single kind."""

    def __init__(self, kind: str, samples=()):
        if kind not in ("outcome", "process", "preference"):
            raise ValueError(f"unknown feedback kind {kind!r}")
        self.kind = kind
        self._samples: list[FeedbackSample] = []
        for sample in samples:
            self.append(sample)

    def append(self, sample: FeedbackSample) -> None:
        if sample.kind != self.kind:
            raise TypeError(f"cannot add a {sample.kind} sample to a {self.kind} dataset")
        self._samples.append(sample)

    def extend(self, samples) -> None:
        for sample in samples:
            self.append(sample)

    def __len__(self):
        return len(self._samples)

    def __iter__(self):
        return iter(self._samples)

    def __getitem__(self, i):
        return self._samples[i]

    def __add__(self, other: "Dataset") -> "Dataset":
        if other.kind != self.kind:
            raise TypeError("cannot concatenate datasets of different kinds")
        return Dataset(self.kind, [*self, *other])

    def trajectory_arrays(self, which: str = "plus") -> tuple[np.ndarray, np.ndarray]:
        """Stacked ``(n, H)`` state and action arrays.

        For preference data ``which`` picks ``"plus"`` or ``"minus"`` trajectories.
        """
        trajs = [_trajectory(s, which) for s in self._samples]
        if not trajs:
            return np.zeros((0, 0), dtype=np.int64), np.zeros((0, 0), dtype=np.int64)
        return np.stack([t.states for t in trajs]), np.stack([t.actions for t in trajs])

    def outcome_rewards(self) -> np.ndarray:
        self._require("outcome")
        return np.array([s.reward for s in self._samples], dtype=float)

    def step_rewards(self) -> np.ndarray:
        self._require("process")
        return np.array([s.rewards for s in self._samples], dtype=float)

    def labels(self) -> np.ndarray:
        self._require("preference")
        return np.array([s.y for s in self._samples], dtype=float)

    def _require(self, kind: str) -> None:
        if self.kind != kind:
            raise TypeError(f"expected a {kind} dataset, got {self.kind}")


def _trajectory(sample, which="plus"):
    if isinstance(sample, PreferenceSample):
        return sample.plus if which == "plus" else sample.minus
    return sample.trajectory


def trajectory_rewards(tables: np.ndarray, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """``R(tau)`` for every table (``(n_R, H, S, A)``) and trajectory: shape ``(n_R, n)``."""
    if states.size == 0:
        return np.zeros((len(tables), len(states)))
    steps = np.arange(states.shape[1])
    return tables[:, steps[None, :], states, actions].sum(axis=2)


def _step_terms(f_next, reward, h, states, actions, labels):
    """Per-sample reward and next-state max for step ``h``."""
    if reward is None:
        if labels is None:
            raise TypeError("observed per-step rewards are only available for process data")
        r = labels[:, h]
    else:
        r = np.asarray(reward, dtype=float)[h][states[:, h], actions[:, h]]
    if f_next is None:
        nxt = np.zeros(len(states))
    else:
        nxt = np.asarray(f_next, dtype=float)[states[:, h + 1]].max(axis=1)
    return r, nxt


def _bellman_inputs(D: Dataset):
    if D.kind == "preference":
        states, actions = D.trajectory_arrays("plus")
        return states, actions, None
    states, actions = D.trajectory_arrays()
    labels = D.step_rewards() if D.kind == "process" else None
    return states, actions, labels


def loss_rm(R: np.ndarray, D: Dataset) -> float:
    """Outcome reward-model loss ``sum (R(tau) - r)^2``."""
    D._require("outcome")
    if len(D) == 0:
        return 0.0
    states, actions = D.trajectory_arrays()
    pred = trajectory_rewards(np.asarray(R, dtype=float)[None], states, actions)[0]
    return float(np.sum((pred - D.outcome_rewards()) ** 2))


def loss_be_h(f_h, f_next, R, h: int, D: Dataset) -> float:
    """Squared Bellman error at step ``h`` under proxy reward ``R``.

    ``f_next`` is ``None`` at the last step. ``R=None`` uses the observed per-step
    rewards of a process dataset. Preference data contributes its ``tau+`` trajectories.
    """
    if len(D) == 0:
        return 0.0
    states, actions, labels = _bellman_inputs(D)
    r, nxt = _step_terms(f_next, R, h, states, actions, labels)
    q = np.asarray(f_h, dtype=float)[states[:, h], actions[:, h]]
    return float(np.sum((q - r - nxt) ** 2))


def _total_be(f, R, D):
    H = len(f)
    return sum(loss_be_h(f[h], f[h + 1] if h + 1 < H else None, R, h, D) for h in range(H))


def loss_be(f: np.ndarray, R, G: ComparatorClass, D: Dataset) -> float:
    """Comparator-subtracted Bellman loss.

    ``sum_h L_h(f_h, f_{h+1}; R) - min_{g in G} sum_h L_h(g_h, f_{h+1}; R)``; the
    minimum over the product class splits into one minimum per step.
    """
    f = np.asarray(f, dtype=float)
    H = len(f)
    if len(D) == 0:
        return 0.0
    best = 0.0
    for h in range(H):
        f_next = f[h + 1] if h + 1 < H else None
        best += min(loss_be_h(g, f_next, R, h, D) for g in G.steps[h])
    return _total_be(f, R, D) - best


def loss_dbe(f: np.ndarray, D: Dataset) -> float:
    """Bellman-residual loss ``sum (R^f(tau) - r)^2`` for deterministic dynamics."""
    D._require("outcome")
    if len(D) == 0:
        return 0.0
    states, actions = D.trajectory_arrays()
    pred = induced_rewards(np.asarray(f, dtype=float)[None], states, actions)[0]
    return float(np.sum((pred - D.outcome_rewards()) ** 2))


def logistic_loss(w, y, beta: float):
    """``-beta w y + log(1 + exp(beta w))``, stable for large ``|beta w|``."""
    x = beta * np.asarray(w, dtype=float)
    out = np.logaddexp(0.0, x) - x * np.asarray(y, dtype=float)
    return float(out) if np.ndim(out) == 0 else out


def logistic_loss_grad(w, y, beta: float):
    """Derivative of :func:`logistic_loss` in ``w``: ``beta (sigmoid(beta w) - y)``."""
    x = beta * np.asarray(w, dtype=float)
    return beta * (0.5 * (1.0 + np.tanh(0.5 * x)) - np.asarray(y, dtype=float))


def loss_pbrm(R: np.ndarray, D: Dataset, beta: float) -> float:
    D._require("preference")
    if len(D) == 0:
        return 0.0
    R = np.asarray(R, dtype=float)[None]
    w = trajectory_rewards(R, *D.trajectory_arrays("plus"))[0] - trajectory_rewards(
        R, *D.trajectory_arrays("minus")
    )[0]
    return float(np.sum(logistic_loss(w, D.labels(), beta)))


def v_ref_hat(R: np.ndarray, D: Dataset) -> float:
    """Mean of ``R(tau-)`` over a preference dataset (estimated reference value)."""
    D._require("preference")
    if len(D) == 0:
        raise ValueError("reference value estimate needs a nonempty dataset")
    return float(trajectory_rewards(np.asarray(R, dtype=float)[None], *D.trajectory_arrays("minus"))[0].mean())

