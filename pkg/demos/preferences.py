"""
Learning from pairwise preferences
==================================

Feedback is a single bit per pair of trajectories, drawn from a Bradley-Terry
model. The learner compares its own roll-ins against the reference policy.
"""

import numpy as np

from outcome_rl import AlgoConfig, TabularMdp, Trajectory, build_hard_case, run_algorithm3
from outcome_rl.mdp import btl_probability, sample_preference

rng = np.random.default_rng(0)
mdp = TabularMdp(np.zeros((0, 1, 2, 1)), [1.0], [[[0.7, 0.4]]])
plus, minus = Trajectory([0], [0]), Trajectory([0], [1])
for beta in (0.0, 1.0, 5.0):
    rate = np.mean([sample_preference(mdp, plus, minus, beta, rng) for _ in range(10_000)])
    print(f"beta={beta}: empirical {rate:.3f}, model {btl_probability(0.7, 0.4, beta):.3f}")

# %%
b = build_hard_case()
gaps = []
for seed in range(10):
    trace = run_algorithm3(b.mdp, b.q_class, b.r_class, b.g_class, AlgoConfig(lam=4.0, iterations=2000, seed=seed, beta_btl=5.0))
    gaps.append(trace.output_suboptimality)
print("algorithm 3 on the two-step instance, per seed:", np.round(gaps, 4))
print("mean:", np.mean(gaps))
