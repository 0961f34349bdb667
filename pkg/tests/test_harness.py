import json

import numpy as np
import pytest

from outcome_rl import harness
from outcome_rl.environments import build_hard_case
from outcome_rl.harness import (
    ConfigError,
    ExperimentConfig,
    SummaryReport,
    read_trace_csv,
    run_experiment,
    separation_experiment,
    validate,
    worker_count,
)


def hard_case_config(tmp_path, algorithm="fitted_baseline", seeds=(0,), **algo):
    return {
        "environment": {"name": "hard_case"},
        "classes": {"generator": "hard_case"},
        "algorithm": {"name": algorithm, "iterations": 50, **algo},
        "seeds": list(seeds),
        "output_dir": str(tmp_path / "out"),
    }


@pytest.mark.parametrize(
    "mutate, path",
    [
        (lambda d: d.pop("seeds"), "seeds"),
        (lambda d: d.update(seeds=[]), "seeds"),
        (lambda d: d.update(seeds=[0, "x"]), "seeds"),
        (lambda d: d["environment"].update(name="grid"), "environment.name"),
        (lambda d: d["classes"].update(generator="magic"), "classes.generator"),
        (lambda d: d["algorithm"].update(name="ppo"), "algorithm.name"),
        (lambda d: d["algorithm"].update({"lambda": -1}), "algorithm.lambda"),
        (lambda d: d["algorithm"].update(iterations=0), "algorithm.iterations"),
        (lambda d: d["algorithm"].update(iterations=2.5), "algorithm.iterations"),
        (lambda d: d["algorithm"].update(name="algorithm3"), "algorithm.beta_btl"),
        (lambda d: d["algorithm"].update(beta_btl=0), "algorithm.beta_btl"),
        (lambda d: d["algorithm"].update(outcome_noise="cauchy"), "algorithm.outcome_noise"),
        (lambda d: d.update(output_dir=""), "output_dir"),
        (lambda d: d["environment"].update(params=[]), "environment.params"),
    ],
)
def test_config_errors_name_the_field(tmp_path, mutate, path):
    doc = hard_case_config(tmp_path)
    mutate(doc)
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_dict(doc)
    assert str(err.value).startswith(path)


def test_invalid_json_is_a_config_error():
    with pytest.raises(ConfigError, match="invalid JSON"):
        ExperimentConfig.from_json("{not json")


def test_algorithm2_needs_deterministic_environment(tmp_path):
    doc = {
        "environment": {"name": "random_tabular", "params": {"num_states": 3, "num_actions": 2, "horizon": 3}},
        "classes": {"generator": "singleton_optimal"},
        "algorithm": {"name": "algorithm2", "iterations": 5},
        "seeds": [0],
        "output_dir": str(tmp_path),
    }
    with pytest.raises(ConfigError, match="^algorithm.name: algorithm2 requires"):
        validate(ExperimentConfig.from_dict(doc))


def test_bad_environment_params_are_config_errors(tmp_path):
    doc = hard_case_config(tmp_path)
    doc["environment"] = {"name": "deterministic_chain", "params": {"length": 1, "num_actions": 2}}
    doc["classes"] = {"generator": "singleton_optimal"}
    with pytest.raises(ConfigError, match="^environment.params"):
        validate(ExperimentConfig.from_dict(doc))


def test_hard_case_classes_need_hard_case_environment(tmp_path):
    doc = hard_case_config(tmp_path)
    doc["environment"] = {"name": "deterministic_chain", "params": {"length": 3, "num_actions": 2}}
    with pytest.raises(ConfigError, match="^classes.generator"):
        ExperimentConfig.from_dict(doc)


def test_fitted_baseline_single_seed_summary(tmp_path):
    cfg = ExperimentConfig.from_dict(hard_case_config(tmp_path))
    report = run_experiment(cfg)
    assert report.final_suboptimality[0] == pytest.approx(0.01, abs=1e-12)
    rows = (cfg.output_dir / "trace_000_seed0.csv").read_text().splitlines()
    assert rows[-1].split(",")[1] == "0.01"
    summary = json.loads((cfg.output_dir / "summary.json").read_text())
    assert summary["mean"] == pytest.approx(0.01, abs=1e-12)
    assert summary["stderr"] == 0.0


def test_duplicate_seeds_give_identical_traces(tmp_path):
    cfg = ExperimentConfig.from_dict(hard_case_config(tmp_path, "algorithm1", seeds=(0, 0), **{"lambda": 4}))
    run_experiment(cfg)
    a = (cfg.output_dir / "trace_000_seed0.csv").read_bytes()
    b = (cfg.output_dir / "trace_001_seed0.csv").read_bytes()
    assert a == b


def test_summary_recomputable_from_traces(tmp_path):
    cfg = ExperimentConfig.from_dict(hard_case_config(tmp_path, "algorithm1", seeds=(0, 1, 2), **{"lambda": 4}))
    report = run_experiment(cfg)
    finals, curves, episodes = [], [], 0
    for k, seed in enumerate(cfg.seeds):
        rows = read_trace_csv(cfg.output_dir / harness.trace_filename(k, seed))
        sub = np.array([r["suboptimality"] for r in rows])
        finals.append(sub.mean())
        curves.append(sub)
        episodes += sum(r["episodes"] for r in rows)
    np.testing.assert_allclose(report.final_suboptimality, finals, atol=1e-12)
    assert report.mean == pytest.approx(np.mean(finals), abs=1e-12)
    assert report.stderr == pytest.approx(np.std(finals, ddof=1) / np.sqrt(3), abs=1e-12)
    np.testing.assert_allclose(report.curve, np.mean(curves, axis=0), atol=1e-12)
    assert report.total_episodes == episodes == 3 * 50 * 2


def test_run_writes_only_inside_output_dir(tmp_path):
    cfg = ExperimentConfig.from_dict(hard_case_config(tmp_path, seeds=(3, 4)))
    run_experiment(cfg)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["out"]
    assert sorted(p.name for p in cfg.output_dir.iterdir()) == [
        "summary.json",
        "trace_000_seed3.csv",
        "trace_001_seed4.csv",
    ]


def test_partial_results_flushed_on_failure(tmp_path, monkeypatch):
    real = harness.run_single

    def flaky(name, mdp, classes, cfg):
        if cfg.seed == 1:
            raise RuntimeError("boom")
        return real(name, mdp, classes, cfg)

    monkeypatch.setattr(harness, "run_single", flaky)
    monkeypatch.setenv("OUTCOME_RL_THREADS", "1")
    cfg = ExperimentConfig.from_dict(hard_case_config(tmp_path, seeds=(0, 1, 2)))
    with pytest.raises(RuntimeError, match="boom"):
        run_experiment(cfg)
    partial = json.loads((cfg.output_dir / "summary_partial.json").read_text())
    assert partial["error"] == "boom"
    assert 0 in partial["completed_seeds"]
    assert (cfg.output_dir / "trace_000_seed0.csv").exists()
    assert not (cfg.output_dir / "summary.json").exists()


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("OUTCOME_RL_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("OUTCOME_RL_THREADS", "zero")
    assert worker_count() >= 1
    monkeypatch.delenv("OUTCOME_RL_THREADS")
    assert worker_count() >= 1


def test_other_environments_and_generators(tmp_path):
    doc = {
        "environment": {"name": "deterministic_chain", "params": {"length": 4, "num_actions": 2, "random_start": True}},
        "classes": {"generator": "perturbed_optimal", "params": {"size": 6, "scale": 0.1, "comparator": "q_class"}},
        "algorithm": {"name": "algorithm2", "lambda": 4, "iterations": 20},
        "seeds": [0],
        "output_dir": str(tmp_path / "a"),
    }
    assert run_experiment(ExperimentConfig.from_dict(doc)).algorithm == "algorithm2"
    doc["environment"] = {"name": "random_tabular", "params": {"num_states": 3, "num_actions": 2, "horizon": 2, "fixed_start": True}}
    doc["classes"] = {"generator": "random", "params": {"size": 3, "reward_size": 2}}
    doc["algorithm"] = {"name": "algorithm3", "beta_btl": 2, "iterations": 5}
    assert len(run_experiment(ExperimentConfig.from_dict(doc)).curve) == 5
    doc["algorithm"] = {"name": "process_baseline", "iterations": 5}
    assert run_experiment(ExperimentConfig.from_dict(doc)).total_episodes == 5


def test_json_environment_and_classes(tmp_path):
    b = build_hard_case()
    (tmp_path / "mdp.json").write_text(b.mdp.to_json())
    (tmp_path / "classes.json").write_text(
        json.dumps({"q_class": b.q_class.tables.tolist(), "r_class": b.r_class.tables.tolist()})
    )
    doc = {
        "environment": {"name": "json", "params": {"path": str(tmp_path / "mdp.json")}},
        "classes": {"generator": "json", "params": {"path": str(tmp_path / "classes.json"), "comparator": "q_class"}},
        "algorithm": {"name": "fitted_baseline", "iterations": 30},
        "seeds": [0],
        "output_dir": str(tmp_path / "out"),
    }
    assert run_experiment(ExperimentConfig.from_dict(doc)).mean == pytest.approx(0.01, abs=1e-12)


def test_relu_environment_config(tmp_path):
    doc = {
        "environment": {"name": "relu_family", "params": {"d": 3, "max_n": 6, "seed": 2}},
        "classes": {"generator": "relu_family"},
        "algorithm": {"name": "process_baseline", "iterations": 12},
        "seeds": [0],
        "output_dir": str(tmp_path / "out"),
    }
    report = run_experiment(ExperimentConfig.from_dict(doc))
    assert report.curve[-1] == 0.0


def test_separation_report_format():
    process, outcome = separation_experiment(d=3, seeds=[0, 1], max_n=8)
    for report in (process, outcome):
        assert isinstance(report, SummaryReport)
        assert report.seeds == [0, 1]
        assert set(report.extras) == {"success", "episodes_to_optimal", "num_arms", "budget"}
        assert report.extras["budget"] == [2 * n for n in report.extras["num_arms"]]
    assert all(process.extras["success"])


def test_separation_two_arms_both_succeed_with_ample_budget():
    process, outcome = separation_experiment(d=1, budget=1000, seeds=range(5))
    assert process.extras["num_arms"] == [2] * 5
    assert all(process.extras["success"]) and all(outcome.extras["success"])


def test_separation_budget_exhaustion_is_recorded():
    _, outcome = separation_experiment(d=6, budget=1, seeds=[0], max_n=16)
    assert outcome.extras["budget"] == [1]
    assert outcome.extras["success"][0] in (True, False)
