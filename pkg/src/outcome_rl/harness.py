"""Experiment orchestration: config validation, multi-seed runs, traces and summaries.

A config is a JSON object::

    {
      "environment": {"name": "hard_case" | "random_tabular" | "deterministic_chain"
                              | "relu_family" | "json", "params": {...}},
      "classes":     {"generator": "hard_case" | "perturbed_optimal" | "singleton_optimal"
                              | "relu_family" | "random" | "json", "params": {...}},
      "algorithm":   {"name": "algorithm1" | "algorithm2" | "algorithm3"
                              | "fitted_baseline" | "process_baseline",
                      "lambda": 16, "iterations": 500, "beta_btl": 5, "beta_conf": 1,
                      "outcome_noise": "bernoulli", "noise_sigma": 0.1, "ref_action": 0},
      "seeds": [0, 1, 2],
      "output_dir": "runs/example"
    }

Each seed writes ``trace_<k>_seed<seed>.csv`` (k is the position in the seed list)
and the run writes ``summary.json``.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import algorithms as algos
from .algorithms import AlgoConfig, IterationRecord, RunTrace
from .classes import (
    ComparatorClass,
    QClass,
    RewardClass,
    comparator_closure,
    perturbed_optimal_class,
    perturbed_reward_class,
    random_q_class,
    random_reward_class,
)
from .environments import (
    ReluFamily,
    build_deterministic_chain,
    build_hard_case,
    build_random_tabular,
    build_relu_family,
    relu_comparator_class,
    relu_q_class,
    relu_rewards,
    sphere_packing,
)
from .mdp import Policy, TabularMdp, optimal_q, sample_outcome_reward, sample_trajectory

log = logging.getLogger(__name__)

ENVIRONMENTS = ("hard_case", "random_tabular", "deterministic_chain", "relu_family", "json")
GENERATORS = ("hard_case", "perturbed_optimal", "singleton_optimal", "relu_family", "random", "json")
ALGORITHMS = ("algorithm1", "algorithm2", "algorithm3", "fitted_baseline", "process_baseline")
THREADS_ENV = "OUTCOME_RL_THREADS"


class ConfigError(ValueError):
    """Invalid experiment configuration; the message starts with the offending field path."""


@dataclass
class ExperimentConfig:
    environment: dict
    classes: dict
    algorithm: dict
    seeds: list[int]
    output_dir: Path

    @classmethod
    def from_dict(cls, doc) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("<root>: config must be a JSON object")
        for key in ("environment", "classes", "algorithm", "seeds", "output_dir"):
            if key not in doc:
                raise ConfigError(f"{key}: missing required field")
        env = _section(doc, "environment", "name", ENVIRONMENTS)
        classes = _section(doc, "classes", "generator", GENERATORS)
        algo = _section(doc, "algorithm", "name", ALGORITHMS)
        seeds = doc["seeds"]
        if not isinstance(seeds, list) or not seeds or not all(_is_int(s) for s in seeds):
            raise ConfigError("seeds: must be a nonempty list of integers")
        if not isinstance(doc["output_dir"], str) or not doc["output_dir"]:
            raise ConfigError("output_dir: must be a nonempty string")

        _check_number(algo, "lambda", minimum=0.0, path="algorithm.lambda")
        _check_number(algo, "iterations", minimum=1, path="algorithm.iterations", integer=True)
        if algo["name"] == "algorithm3" and "beta_btl" not in algo:
            raise ConfigError("algorithm.beta_btl: required for algorithm3")
        if "beta_btl" in algo:
            _check_number(algo, "beta_btl", minimum=0.0, path="algorithm.beta_btl", strict=True)
        if "beta_conf" in algo:
            _check_number(algo, "beta_conf", minimum=0.0, path="algorithm.beta_conf")
        if algo.get("outcome_noise", "bernoulli") not in ("bernoulli", "gaussian", "none"):
            raise ConfigError("algorithm.outcome_noise: must be bernoulli, gaussian or none")
        if classes["generator"] in ("hard_case", "relu_family") and env["name"] != classes["generator"]:
            raise ConfigError(f"classes.generator: {classes['generator']} classes need the matching environment")
        return cls(env, classes, algo, [int(s) for s in seeds], Path(doc["output_dir"]))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"<root>: invalid JSON ({exc})") from None
        return cls.from_dict(doc)

    def algo_config(self, seed: int, mdp: TabularMdp) -> AlgoConfig:
        a = self.algorithm
        ref = Policy.constant(mdp.horizon, mdp.num_states, int(a.get("ref_action", 0)))
        return AlgoConfig(
            lam=float(a.get("lambda", 1.0)),
            iterations=int(a.get("iterations", 100)),
            beta_btl=float(a.get("beta_btl", 1.0)),
            beta_conf=float(a.get("beta_conf", 1.0)),
            seed=seed,
            ref_policy=ref,
            outcome_noise=a.get("outcome_noise", "bernoulli"),
            noise_sigma=float(a.get("noise_sigma", 0.1)),
        )


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _section(doc, key, name_field, allowed) -> dict:
    sec = doc[key]
    if not isinstance(sec, dict):
        raise ConfigError(f"{key}: must be an object")
    if sec.get(name_field) not in allowed:
        raise ConfigError(f"{key}.{name_field}: must be one of {', '.join(allowed)}")
    params = sec.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError(f"{key}.params: must be an object")
    return dict(sec, params=params)


def _check_number(sec, key, minimum, path, integer=False, strict=False):
    if key not in sec:
        return
    value = sec[key]
    ok = _is_int(value) if integer else isinstance(value, (int, float)) and not isinstance(value, bool)
    if not ok or value < minimum or (strict and value == minimum):
        kind = "an integer" if integer else "a number"
        op = ">" if strict else ">="
        raise ConfigError(f"{path}: must be {kind} {op} {minimum}")


@dataclass
class Classes:
    F: QClass
    R: RewardClass
    G: ComparatorClass


def build_environment(section: dict):
    """Returns ``(mdp, extra)``; ``extra`` is the hard-case bundle or ReLU family when relevant."""
    name, p = section["name"], section["params"]
    try:
        if name == "hard_case":
            bundle = build_hard_case()
            return bundle.mdp, bundle
        if name == "random_tabular":
            return build_random_tabular(**p), None
        if name == "deterministic_chain":
            return build_deterministic_chain(**p), None
        if name == "relu_family":
            rng = np.random.default_rng(p.get("seed", 0))
            eps = p.get("epsilon", 1.0 / 3.0)
            theta = sphere_packing(p.get("d", 6), eps, p.get("max_n", 32), rng)
            hidden = p.get("hidden_index")
            hidden = int(rng.integers(len(theta))) if hidden is None else hidden
            family = build_relu_family(theta, eps, hidden)
            return family.mdp, family
        return TabularMdp.from_json(Path(p["path"]).read_text()), None
    except (TypeError, KeyError, ValueError, OSError) as exc:
        raise ConfigError(f"environment.params: {exc}") from None


def build_classes(section: dict, mdp: TabularMdp, extra=None) -> Classes:
    gen, p = section["generator"], section["params"]
    try:
        if gen == "hard_case":
            return Classes(extra.q_class, extra.r_class, extra.g_class)
        if gen == "relu_family":
            F = relu_q_class(extra)
            R = RewardClass([relu_rewards(extra.theta, extra.epsilon, u) for u in range(extra.num_arms)])
            return Classes(F, R, relu_comparator_class(extra, F))
        if gen == "singleton_optimal":
            F, R = QClass([optimal_q(mdp)]), RewardClass([mdp.mean_reward])
        elif gen == "perturbed_optimal":
            seed = p.get("seed", 0)
            F = perturbed_optimal_class(mdp, p.get("size", 16), p.get("scale", 0.1), seed)
            R = perturbed_reward_class(mdp, p.get("reward_size", 1), p.get("reward_scale", 0.05), seed + 1)
        elif gen == "random":
            seed = p.get("seed", 0)
            F = random_q_class(mdp.shape, p.get("size", 16), seed)
            R = random_reward_class(mdp.shape, p.get("reward_size", 4), seed + 1)
        else:
            doc = json.loads(Path(p["path"]).read_text())
            F, R = QClass(doc["q_class"]), RewardClass(doc.get("r_class", [mdp.mean_reward]))
        if p.get("comparator", "closure") == "q_class":
            G = ComparatorClass.from_members(F)
        else:
            G = comparator_closure(mdp, F, R)
        return Classes(F, R, G)
    except (TypeError, KeyError, ValueError, OSError) as exc:
        raise ConfigError(f"classes.params: {exc}") from None


def validate(cfg: ExperimentConfig):
    """Structural checks plus the checks that need the built environment."""
    mdp, extra = build_environment(cfg.environment)
    name = cfg.algorithm["name"]
    if name == "algorithm2" and not mdp.is_deterministic():
        raise ConfigError("algorithm.name: algorithm2 requires a deterministic environment")
    if name != "algorithm2" and mdp.fixed_start is None:
        raise ConfigError(f"algorithm.name: {name} requires a fixed initial state")
    ref = int(cfg.algorithm.get("ref_action", 0))
    if not 0 <= ref < mdp.num_actions:
        raise ConfigError("algorithm.ref_action: out of range")
    classes = build_classes(cfg.classes, mdp, extra)
    if classes.F.shape != mdp.shape:
        raise ConfigError("classes.params: class tables do not match the environment shape")
    return mdp, classes


def run_single(name: str, mdp: TabularMdp, classes: Classes, cfg: AlgoConfig) -> RunTrace:
    if name == "algorithm1":
        return algos.run_algorithm1(mdp, classes.F, classes.R, classes.G, cfg)
    if name == "algorithm2":
        return algos.run_algorithm2(mdp, classes.F, cfg)
    if name == "algorithm3":
        return algos.run_algorithm3(mdp, classes.F, classes.R, classes.G, cfg)
    if name == "fitted_baseline":
        return algos.run_fitted_reward_baseline(mdp, classes.F, classes.R, classes.G, cfg)
    if name == "process_baseline":
        return algos.run_process_reward_baseline(mdp, classes.F, classes.G, cfg)
    raise ValueError(f"unknown algorithm {name!r}")


@dataclass
class SummaryReport:
    algorithm: str
    seeds: list[int]
    final_suboptimality: list[float]
    mean: float
    stderr: float
    curve: list[float]
    total_episodes: int
    extras: dict = field(default_factory=dict)

    @classmethod
    def from_traces(cls, algorithm: str, seeds, traces, finals=None, extras=None) -> "SummaryReport":
        finals = [t.output_suboptimality for t in traces] if finals is None else list(finals)
        arr = np.array(finals, dtype=float)
        stderr = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
        length = min(len(t.records) for t in traces)
        curve = np.mean([t.suboptimalities[:length] for t in traces], axis=0)
        return cls(
            algorithm,
            list(seeds),
            [float(x) for x in finals],
            float(arr.mean()),
            stderr,
            [float(x) for x in curve],
            int(sum(t.total_episodes for t in traces)),
            extras or {},
        )

    def to_dict(self) -> dict:
        return dict(vars(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
    return os.cpu_count() or 1


def trace_filename(position: int, seed: int) -> str:
    return f"trace_{position:03d}_seed{seed}.csv"


def run_experiment(cfg: ExperimentConfig) -> SummaryReport:
    """Run every seed, writing one trace CSV per seed and ``summary.json`` into ``output_dir``."""
    mdp, classes = validate(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = cfg.algorithm["name"]
    traces: dict[int, RunTrace] = {}
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        futures = {
            pool.submit(run_single, name, mdp, classes, cfg.algo_config(seed, mdp)): k
            for k, seed in enumerate(cfg.seeds)
        }
        try:
            for fut in as_completed(futures):
                k = futures[fut]
                trace = fut.result()
                (out / trace_filename(k, cfg.seeds[k])).write_text(trace.to_csv())
                traces[k] = trace
        except Exception as exc:
            for other in futures:
                other.cancel()
            done = sorted(traces)
            partial = {"error": str(exc), "completed_seeds": [cfg.seeds[k] for k in done]}
            (out / "summary_partial.json").write_text(json.dumps(partial, indent=2))
            raise
    ordered = [traces[k] for k in range(len(cfg.seeds))]
    report = SummaryReport.from_traces(name, cfg.seeds, ordered)
    (out / "summary.json").write_text(report.to_json())
    return report


def read_trace_csv(path) -> list[dict]:
    import csv

    with open(path, newline="") as fh:
        return [
            {
                "t": int(row["t"]),
                "suboptimality": float(row["suboptimality"]),
                "f_index": int(row["f_index"]),
                "r_index": int(row["r_index"]) if row["r_index"] else None,
                "episodes": int(row["episodes"]),
            }
            for row in csv.DictReader(fh)
        ]


# Outcome vs process separation ---------------------------------------------------


def run_round_robin_outcome(family: ReluFamily, budget: int, rng: np.random.Generator) -> tuple[RunTrace, int]:
    """Play arms in turn with outcome feedback; recommend the best empirical mean.

    Returns the trace (per-episode suboptimality of the current recommendation)
    and the final recommended arm. Ties go to the lowest arm index.
    """
    mdp = family.mdp
    n = family.num_arms
    best = family.arm_value(family.hidden_index)
    sums = np.zeros(n)
    counts = np.zeros(n)
    trace = RunTrace("round_robin_outcome", visits=np.zeros(mdp.shape, dtype=np.int64))
    arm = 0
    for k in range(budget):
        played = k % n
        table = np.zeros((mdp.horizon, mdp.num_states), dtype=np.int64)
        table[0, :] = played
        policy = Policy(table)
        tau = sample_trajectory(mdp, policy, rng)
        sums[played] += sample_outcome_reward(mdp, tau, rng)
        counts[played] += 1
        means = np.where(counts > 0, sums / np.maximum(counts, 1), -np.inf)
        arm = int(np.argmax(means))
        trace.policies.append(policy)
        trace.records.append(IterationRecord(k + 1, arm, None, best - family.arm_value(arm), 1))
    return trace, arm


def _first_success(trace: RunTrace, threshold: float):
    hits = np.flatnonzero(trace.suboptimalities <= threshold)
    return int(hits[0]) + 1 if len(hits) else None


def separation_experiment(
    d: int = 6,
    epsilon: float = 1.0 / 3.0,
    budget: int | None = None,
    seeds=range(10),
    max_n: int = 32,
    lam: float = 1.0,
    threshold: float = 0.1,
) -> tuple[SummaryReport, SummaryReport]:
    """Process-feedback optimism versus round-robin outcome learning on the ReLU family.

    Each seed draws its own packing and hidden direction. ``budget`` defaults to
    twice the number of arms. Returns ``(process_report, outcome_report)``; the
    per-seed final suboptimality is that of the returned policy, and ``extras``
    carries success flags, episodes to the first threshold-optimal recommendation,
    arm counts and budgets.
    """
    seeds = list(seeds)
    proc_traces, out_traces = [], []
    proc_final, out_final = [], []
    extras = {"process": _empty_extras(), "outcome": _empty_extras()}
    for seed in seeds:
        rng = np.random.default_rng(seed)
        theta = sphere_packing(d, epsilon, max_n, rng)
        family = build_relu_family(theta, epsilon, int(rng.integers(len(theta))))
        n = family.num_arms
        steps = 2 * n if budget is None else int(budget)
        best = family.arm_value(family.hidden_index)

        F = relu_q_class(family)
        G = relu_comparator_class(family, F)
        cfg = AlgoConfig(lam=lam, iterations=steps, seed=seed)
        ptrace = algos.run_process_reward_baseline(family.mdp, F, G, cfg)
        p_arm = int(np.argmax(F[ptrace.final_f_index][0, 0]))
        o_trace, o_arm = run_round_robin_outcome(family, steps, rng)

        for mode, trace, arm, finals, traces in (
            ("process", ptrace, p_arm, proc_final, proc_traces),
            ("outcome", o_trace, o_arm, out_final, out_traces),
        ):
            gap = best - family.arm_value(arm)
            finals.append(gap)
            traces.append(trace)
            ex = extras[mode]
            ex["success"].append(bool(gap <= threshold))
            ex["episodes_to_optimal"].append(_first_success(trace, threshold))
            ex["num_arms"].append(n)
            ex["budget"].append(steps)
    return (
        SummaryReport.from_traces("process_baseline", seeds, proc_traces, proc_final, extras["process"]),
        SummaryReport.from_traces("round_robin_outcome", seeds, out_traces, out_final, extras["outcome"]),
    )


def _empty_extras() -> dict:
    return {"success": [], "episodes_to_optimal": [], "num_arms": [], "budget": []}
