"""
How much one distribution can cover a set of policies
=====================================================

The coefficient is the smallest worst-case density ratio of any policy's
occupancy to a single reference distribution per step. For a finite set it has
a closed form: add up the pointwise maximum occupancy.
"""

import numpy as np

from outcome_rl import Policy, build_random_tabular, coverability, coverability_prime, coverability_report
from outcome_rl.coverability import coverability_bisection_oracle

mdp = build_random_tabular(5, 3, 4, seed=1)
rng = np.random.default_rng(1)
policies = [Policy(rng.integers(3, size=(4, 5))) for _ in range(6)]

for k in (1, 2, 4, 6):
    c = coverability(mdp, policies[:k])
    print(f"{k} policies: closed form {c:.6f}, bisection {coverability_bisection_oracle(mdp, policies[:k]):.6f}")

report = coverability_report(mdp, policies)
print("per-step values:", np.round(report.layer_values, 4))
print("averaged over start states:", round(coverability_prime(mdp, policies), 4))
