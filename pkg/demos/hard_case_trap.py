"""
Fitting the reward first can get stuck
======================================

A two-step MDP where two reward models explain every outcome the learner sees,
as long as it never tries action 1 at the second state. Fitting the reward model
first and then planning optimistically never tries it; optimising the value and
reward model jointly does.
"""

import numpy as np

from outcome_rl import AlgoConfig, build_hard_case, run_algorithm1, run_fitted_reward_baseline

bundle = build_hard_case()
mdp, F, R, G = bundle.mdp, bundle.q_class, bundle.r_class, bundle.g_class

# Value tables for the four candidates: first-step value at s1, second-step values at s2.
for k, f in enumerate(F, start=1):
    print(f"Q{k}: f1(s1)={f[0, 0, 0]:.2f}  f2(s2)=({f[1, 1, 0]:.2f}, {f[1, 1, 1]:.2f})")

# %%
# The fitted-reward baseline. Its suboptimality is exactly 0.01 in every iteration.
trace = run_fitted_reward_baseline(mdp, F, R, G, AlgoConfig(iterations=1000, seed=0))
print("baseline: suboptimality", trace.output_suboptimality, "visits to (s2, a1):", trace.visits[1, 1, 0])

# %%
# Joint optimism over (Q, R) with outcome feedback.
for lam in (4.0, 16.0):
    gaps = [run_algorithm1(mdp, F, R, G, AlgoConfig(lam=lam, iterations=500, seed=s)).output_suboptimality for s in range(10)]
    print(f"algorithm 1, lambda={lam:g}: mean suboptimality {np.mean(gaps):.4f}")
