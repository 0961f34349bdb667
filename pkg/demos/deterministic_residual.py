"""
Outcome rewards on deterministic dynamics
=========================================

With deterministic transitions a Q-function implies a reward for each whole
trajectory: sum the step values and subtract the best value at each next state.
Regressing outcomes on this implied reward is enough to learn.
"""

import itertools

from outcome_rl import AlgoConfig, Trajectory, build_deterministic_chain, induced_reward_model, optimal_q, run_algorithm2
from outcome_rl.classes import perturbed_optimal_class

mdp = build_deterministic_chain(5, 2, seed=0, random_start=True)
q = optimal_q(mdp)

# The implied reward of Q* matches the true reward on every action sequence from state 0.
nxt = mdp.transitions.argmax(axis=-1)
worst = 0.0
for actions in itertools.product(range(2), repeat=mdp.horizon):
    states = [0]
    for h in range(mdp.horizon - 1):
        states.append(int(nxt[h, states[-1], actions[h]]))
    tau = Trajectory(states, actions)
    worst = max(worst, abs(induced_reward_model(q, tau) - mdp.trajectory_reward(tau)))
print("largest implied-reward error:", worst)

# %%
# Sixteen candidates: Q* and fifteen noisy copies.
F = perturbed_optimal_class(mdp, 16, 0.1, seed=0)
trace = run_algorithm2(mdp, F, AlgoConfig(lam=4.0, iterations=2000, seed=0))
curve = trace.suboptimalities
for start in range(0, 2000, 500):
    print(f"iterations {start + 1}-{start + 500}: mean suboptimality {curve[start:start + 500].mean():.4f}")
print("random initial states visited:", sorted({int(x.trajectory.states[0]) for x in trace.dataset}))
