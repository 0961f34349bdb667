"""Outcome-feedback reinforcement learning on finite-horizon tabular MDPs."""

from .algorithms import (
    AlgoConfig,
    IterationRecord,
    RunTrace,
    joint_objective,
    joint_optimize,
    run_algorithm1,
    run_algorithm2,
    run_algorithm3,
    run_fitted_reward_baseline,
    run_process_reward_baseline,
)
from .classes import (
    ComparatorClass,
    QClass,
    RewardClass,
    check_completeness,
    check_realizability,
    comparator_closure,
    greedy_policy,
    induced_reward_model,
)
from .coverability import coverability, coverability_prime, coverability_report
from .environments import build_deterministic_chain, build_hard_case, build_random_tabular, build_relu_family
from .harness import ConfigError, ExperimentConfig, SummaryReport, run_experiment, separation_experiment
from .losses import Dataset, loss_be, loss_be_h, loss_dbe, loss_pbrm, loss_rm, v_ref_hat
from .mdp import (
    ComposedPolicy,
    OutcomeSample,
    Policy,
    PreferenceSample,
    ProcessSample,
    TabularMdp,
    Trajectory,
    bellman_operator,
    compose,
    occupancy,
    optimal_q,
    optimal_value,
    policy_value,
)

__version__ = "0.1.0"
