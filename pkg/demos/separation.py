"""
Process feedback versus outcome feedback
========================================

A two-step family indexed by a hidden unit vector among N packed directions.
Per-step rewards reveal a linear function of the chosen direction, so one
episode pins down the hidden one. The total reward only differs for the hidden
arm, so an outcome learner faces an N-armed bandit with a small gap.
"""

from outcome_rl import separation_experiment

process, outcome = separation_experiment(d=6, epsilon=1 / 3, seeds=range(10), max_n=32)
print("arms per seed:", process.extras["num_arms"])
print("process feedback, successes:", sum(process.extras["success"]), "episodes needed:", process.extras["episodes_to_optimal"])
print("outcome feedback, successes:", sum(outcome.extras["success"]), "with budget", outcome.extras["budget"][0])

# Two arms and a generous budget: both learners succeed.
process, outcome = separation_experiment(d=1, budget=1000, seeds=range(5))
print("d=1:", process.extras["success"], outcome.extras["success"])
