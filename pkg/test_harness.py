"""Tests for the experiment runner, run reports, summaries and curve files"""
import json
import os
import sys
import xml.etree.ElementTree as ET

import pandas as pd
import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.config import METRICS_COLUMNS
from src.curves import emit_curves
from src.errors import ConfigurationError, TrainingDiverged
from src.harness import (
    DIVERGED_FILE, epochs_to_threshold, load_reports, run_experiment, run_seed, summarize_runs,
    write_summary,
)
from src.schemas import EnvConfig, EpochMetrics, ExperimentConfig, RunReport, RunSummary, TrainerConfig
from src.trainer import Trainer


def tiny_experiment(out_dir, **overrides) -> ExperimentConfig:
    settings = dict(
        env=EnvConfig(max_episode_steps=20),
        trainer=TrainerConfig(steps_per_epoch=64, update_minibatch=32, update_passes=2,
                              max_epochs=2, hidden_sizes=[8]),
        seeds=[1, 2],
        output_dir=str(out_dir),
    )
    settings.update(overrides)
    return ExperimentConfig(**settings)


def hand_report(algorithm: str, action_repr: str, seed: int, costs, rewards=None) -> RunReport:
    rewards = rewards if rewards is not None else [-10.0] * len(costs)
    return RunReport(
        algorithm=algorithm, action_repr=action_repr, seed=seed, cost_limit=10.0,
        epochs_completed=len(costs), series={"cost": list(costs), "reward": list(rewards)},
        summary=RunSummary(mean_final_cost=0.0, std_final_cost=0.0, mean_final_reward=0.0,
                           final_window=1, reward_threshold=-50.0),
    )


# ===== Config resolution =====
def test_desk_scale_caps_and_defaults():
    config = ExperimentConfig(
        env=EnvConfig(max_episode_steps=800), trainer=TrainerConfig(max_epochs=200), desk_scale=True
    ).resolved()
    assert config.trainer.max_epochs == 30
    assert config.env.max_episode_steps == 500
    assert config.trainer.steps_per_epoch == 1000
    assert config.final_window == 10
    assert config.reward_threshold == pytest.approx(-50.0)
    full = ExperimentConfig().resolved()
    assert full.final_window == 25 and full.trainer.max_epochs == 200


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(seeds=[])
    with pytest.raises(ValueError):
        ExperimentConfig(seeds=[-1])
    with pytest.raises(ValueError):
        TrainerConfig(clip_eps=1.5)
    with pytest.raises(ValueError):
        TrainerConfig(policy_lr=0.0)


# ===== Running =====
def test_run_experiment_writes_reports_and_csv(tmp_path):
    reports = run_experiment(tiny_experiment(tmp_path / "runs"), max_workers=1)
    assert [r.seed for r in reports] == [1, 2]
    for report in reports:
        run_dir = tmp_path / "runs" / report.label
        assert report.epochs_completed == 2
        assert all(len(values) == 2 for values in report.series.values())
        raw = json.loads((run_dir / "report.json").read_text())
        assert raw["schema"] == 1
        with open(run_dir / "metrics.csv", "rb") as f:
            content = f.read()
        assert b"\r\n" not in content
        lines = content.decode().strip().split("\n")
        assert lines[0] == ",".join(METRICS_COLUMNS)
        assert len(lines) == 3
    assert len(list((tmp_path / "runs").glob("*/report.json"))) == 2


def test_summary_is_recomputable_from_series(tmp_path):
    (report,) = run_experiment(tiny_experiment(tmp_path, seeds=[3], final_window=2), max_workers=1)
    costs = report.series["cost"]
    assert report.summary.mean_final_cost == pytest.approx(sum(costs) / len(costs))
    frame = pd.read_csv(tmp_path / report.label / "metrics.csv")
    assert list(frame["mean_ep_cost"]) == pytest.approx(costs)
    assert list(frame["lambda"]) == pytest.approx(report.series["lambda"])


def test_same_seed_gives_byte_identical_csv(tmp_path):
    first = run_experiment(tiny_experiment(tmp_path / "a", seeds=[5]), max_workers=1)[0]
    run_experiment(tiny_experiment(tmp_path / "b", seeds=[5]), max_workers=1)
    a = (tmp_path / "a" / first.label / "metrics.csv").read_bytes()
    b = (tmp_path / "b" / first.label / "metrics.csv").read_bytes()
    assert a == b


def test_worker_pool_matches_sequential_run(tmp_path):
    sequential = run_experiment(tiny_experiment(tmp_path / "seq", trainer=TrainerConfig(
        steps_per_epoch=64, update_minibatch=32, update_passes=2, max_epochs=1, hidden_sizes=[8])), max_workers=1)
    pooled = run_experiment(tiny_experiment(tmp_path / "pool", trainer=TrainerConfig(
        steps_per_epoch=64, update_minibatch=32, update_passes=2, max_epochs=1, hidden_sizes=[8])), max_workers=2)
    assert [r.series for r in sequential] == [r.series for r in pooled]


def test_effective_config_round_trips(tmp_path):
    config = tiny_experiment(tmp_path, seeds=[7], desk_scale=True)
    (report,) = run_experiment(config, max_workers=1)
    saved = ExperimentConfig.model_validate_json((tmp_path / report.label / "config.json").read_text())
    assert saved.seeds == [7]
    assert saved.env.seed == 7
    assert saved.resolved() == saved
    assert saved.trainer == config.resolved().trainer


def test_unwritable_output_fails_before_training(tmp_path, monkeypatch):
    blocker = tmp_path / "not_a_directory"
    blocker.write_text("")
    monkeypatch.setattr(Trainer, "train_epoch", lambda self: pytest.fail("training started"))
    with pytest.raises(ConfigurationError):
        run_experiment(tiny_experiment(blocker / "runs"), max_workers=1)


def test_divergence_writes_state_and_names_seed(tmp_path, monkeypatch):
    def diverge(self):
        raise TrainingDiverged("policy loss became nan", epoch=1, state={"lambda": 0.0})

    monkeypatch.setattr(Trainer, "train_epoch", diverge)
    with pytest.raises(TrainingDiverged) as excinfo:
        run_seed(tiny_experiment(tmp_path), 4)
    assert excinfo.value.seed == 4
    assert "seed 4" in str(excinfo.value)
    dump = json.loads((tmp_path / "ppo_ar1_seed4" / DIVERGED_FILE).read_text())
    assert dump["seed"] == 4 and dump["state"] == {"lambda": 0.0}
    # header only: no epoch finished
    assert (tmp_path / "ppo_ar1_seed4" / "metrics.csv").read_text().count("\n") == 1


def test_success_plateau_stops_early(tmp_path, monkeypatch):
    def perfect_epoch(self):
        self.epoch += 1
        return EpochMetrics(epoch=self.epoch, mean_ep_reward=-1.0, mean_ep_cost=0.0,
                            mean_ep_len=5.0, success_rate=1.0)

    monkeypatch.setattr(Trainer, "train_epoch", perfect_epoch)
    config = tiny_experiment(tmp_path, seeds=[1], plateau_patience=3,
                             trainer=TrainerConfig(max_epochs=50))
    (report,) = run_experiment(config, max_workers=1)
    assert report.epochs_completed == 3


def test_epochs_to_threshold():
    assert epochs_to_threshold([-80.0, -60.0, -40.0, -30.0], -50.0) == 3
    assert epochs_to_threshold([-80.0, -60.0], -50.0) is None


# ===== Summaries =====
def test_single_report_window_one():
    table = summarize_runs([hand_report("ppo", "ar1", 1, [30.0, 20.0, 17.0])], final_window=1)
    cell = table.cell("ppo", "ar1")
    assert cell.mean_cost == 17.0 and cell.std_cost == 0.0


def test_summary_matches_manual_recomputation():
    reports = [
        hand_report("ppo", "ar1", 1, [20.0, 18.0, 16.0]),
        hand_report("ppo", "ar1", 2, [22.0, 20.0, 20.0]),
        hand_report("cppo", "ar1", 1, [15.0, 10.0, 8.0]),
        hand_report("cppo", "ar1", 2, [15.0, 12.0, 12.0]),
        hand_report("ppo", "ar2", 1, [25.0, 24.0, 24.0]),
        hand_report("cppo", "ar2", 1, [20.0, 18.0, 16.0]),
    ]
    table = summarize_runs(reports, final_window=2)
    # per-run window means: ppo/ar1 17 and 20, cppo/ar1 9 and 12
    assert table.cell("ppo", "ar1").mean_cost == pytest.approx(18.5)
    assert table.cell("ppo", "ar1").std_cost == pytest.approx(1.5)
    assert table.cell("cppo", "ar1").mean_cost == pytest.approx(10.5)
    assert table.cell("cppo", "ar2").mean_cost == pytest.approx(17.0)
    text = table.render_text()
    assert "AR1" in text and "AR2" in text and "CPPO" in text
    assert "18.5 +- 1.5" in text
    assert len(table.to_frame()) == 4


def test_summary_is_order_independent():
    reports = [
        hand_report("ppo", "ar1", s, [float(s), 2.0 * s]) for s in (1, 2, 3)
    ] + [hand_report("cppo", "ar2", s, [1.0, float(s)]) for s in (1, 2)]
    forward = summarize_runs(reports, 1)
    backward = summarize_runs(list(reversed(reports)), 1)
    assert forward.to_csv() == backward.to_csv()
    assert forward.render_text() == backward.render_text()


def test_summarize_needs_reports():
    with pytest.raises(ConfigurationError):
        summarize_runs([], 1)


def test_load_and_write_summary(tmp_path):
    for report in (hand_report("ppo", "ar1", 1, [3.0, 2.0]), hand_report("cppo", "ar1", 1, [1.0, 1.0])):
        run_dir = tmp_path / report.label
        run_dir.mkdir()
        (run_dir / "report.json").write_text(report.model_dump_json(by_alias=True))
    reports = load_reports(str(tmp_path))
    assert sorted(r.label for r in reports) == ["cppo_ar1_seed1", "ppo_ar1_seed1"]
    paths = write_summary(summarize_runs(reports, 1), str(tmp_path))
    frame = pd.read_csv(paths["csv"])
    assert list(frame.columns[:2]) == ["algorithm", "action_repr"]
    assert open(paths["text"]).read() == summarize_runs(list(reversed(reports)), 1).render_text()
    with pytest.raises(ConfigurationError):
        load_reports(str(tmp_path / "missing"))


# ===== Curves =====
def test_emit_curves(tmp_path):
    reports = [
        hand_report("ppo", "ar1", 1, [20.0, 18.0, 16.0], rewards=[-90.0, -70.0, -50.0]),
        hand_report("cppo", "ar1", 1, [15.0, 10.0], rewards=[-95.0, -80.0]),
    ]
    written = emit_curves(reports, str(tmp_path))
    cost = pd.read_csv(written["cost_curves.csv"])
    assert list(cost.columns) == ["epoch", "cppo_ar1_seed1", "ppo_ar1_seed1"]
    assert len(cost) == 3
    assert (tmp_path / "reward_curves.csv").read_text().count("\n") == 4  # header + 3 epochs
    for name in ("reward_curves.svg", "cost_curves.svg"):
        root = ET.parse(written[name]).getroot()
        ids = [el.get("id") for el in root.iter() if el.get("id")]
        assert ids.count("ppo_ar1_seed1") == 1
        assert ids.count("cppo_ar1_seed1") == 1
    cost_ids = [el.get("id") for el in ET.parse(written["cost_curves.svg"]).getroot().iter()]
    assert "cost_limit" in cost_ids


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
