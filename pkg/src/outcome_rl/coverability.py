"""Coverability coefficient of a finite policy class.

For each step, ``min_mu max_{pi,s,a} d^pi_h(s,a) / mu(s,a)`` is attained by
``mu ∝ max_pi d^pi_h``, so the per-step value is ``sum_{s,a} max_pi d^pi_h(s,a)``
and the coefficient is the largest per-step value. Cells no policy reaches are
ignored (0/0 = 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import Policy, TabularMdp, occupancy


@dataclass(frozen=True)
class CoverabilityReport:
    value: float
    layer_values: np.ndarray
    witness: np.ndarray  # (H, S, A), each layer a distribution

    def to_dict(self) -> dict:
        return {
            "coverability": self.value,
            "layer_values": self.layer_values.tolist(),
            "witness": self.witness.tolist(),
        }


def _occupancies(mdp: TabularMdp, policies, initial_dist=None) -> np.ndarray:
    policies = list(policies)
    if not policies:
        raise ValueError("policy set must be nonempty")
    return np.stack([occupancy(mdp, p, initial_dist) for p in policies])


def coverability_report(mdp: TabularMdp, policies, initial_dist=None) -> CoverabilityReport:
    occ = _occupancies(mdp, policies, initial_dist)
    peak = occ.max(axis=0)
    # each layer of an occupancy has unit mass; dividing by the computed mass
    # cancels rounding so that a single policy gives exactly 1
    layer_values = peak.sum(axis=(1, 2)) / occ[0].sum(axis=(1, 2))
    witness = peak / peak.sum(axis=(1, 2))[:, None, None]
    return CoverabilityReport(float(layer_values.max()), layer_values, witness)


def coverability(mdp: TabularMdp, policies) -> float:
    """Coverability coefficient of ``policies`` in ``mdp`` (at least 1)."""
    return coverability_report(mdp, policies).value


def max_density_ratio(occupancies: np.ndarray, mu: np.ndarray) -> float:
    """``max_{h, pi, s, a} d^pi_h(s,a) / mu_h(s,a)`` with 0/0 = 0 and x/0 = inf."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(occupancies > 0, occupancies / mu[None], 0.0)
    return float(ratio.max())


def _layer_feasible(occ_h: np.ndarray, t: float) -> bool:
    """Is there a distribution ``mu`` with ``d^pi(s,a) <= t mu(s,a)`` for every policy?

    Builds the smallest nonnegative ``mu`` meeting each policy's constraint in
    turn and checks that its mass does not exceed 1 (leftover mass can go anywhere).
    """
    need = np.zeros(occ_h.shape[1:])
    for d in occ_h:
        need = np.maximum(need, d / t)
    return need.sum() <= 1.0


def coverability_bisection_oracle(mdp: TabularMdp, policies, tol: float = 1e-12) -> float:
    """Smallest feasible ratio bound, found by bisection on a per-layer feasibility test."""
    occ = _occupancies(mdp, policies)
    worst = 0.0
    for h in range(mdp.horizon):
        lo, hi = 0.0, float(mdp.num_states * mdp.num_actions)
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if mid > 0 and _layer_feasible(occ[:, h], mid):
                hi = mid
            else:
                lo = mid
        worst = max(worst, hi)
    return worst


def coverability_prime(mdp: TabularMdp, policies) -> float:
    """Coverability averaged over initial states: ``E_{s1~rho} C_cov(M_{s1})``."""
    policies = list(policies)
    total = 0.0
    for s, weight in enumerate(mdp.initial_dist):
        if weight > 0:
            start = np.zeros(mdp.num_states)
            start[s] = 1.0
            total += weight * coverability_report(mdp, policies, start).value
    return float(total)


def policy_set(tables) -> list[Policy]:
    return [p if isinstance(p, Policy) else Policy(p) for p in tables]
