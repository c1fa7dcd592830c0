"""Experiment runner: seeded PPO/cPPO runs, incremental CSV logging, run reports and summaries"""
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from .config import MAX_WORKERS, METRICS_COLUMNS
from .errors import ConfigurationError, TrainingDiverged
from .schemas import (
    ActionRepr, Algorithm, EpochMetrics, ExperimentConfig, RunReport, RunSummary,
)
from .trainer import Trainer

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
REPORT_FILE = "report.json"
CONFIG_FILE = "config.json"
CHECKPOINT_FILE = "checkpoint.npz"
DIVERGED_FILE = "diverged_state.json"
SUMMARY_TEXT_FILE = "summary.txt"
SUMMARY_CSV_FILE = "summary.csv"

# report series key -> EpochMetrics attribute
SERIES_FIELDS = {
    "reward": "mean_ep_reward",
    "cost": "mean_ep_cost",
    "length": "mean_ep_len",
    "lambda": "lambda_",
    "kl": "kl",
    "policy_loss": "policy_loss",
    "value_loss": "value_loss",
    "cost_value_loss": "cost_value_loss",
    "success_rate": "success_rate",
    "cost_rate": "cost_rate",
    "cumulative_cost": "cumulative_cost",
}


def load_experiment_config(path: str) -> ExperimentConfig:
    """Read and validate an experiment JSON file"""
    if not os.path.isfile(path):
        raise ConfigurationError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        raw = f.read()
    try:
        return ExperimentConfig.model_validate_json(raw)
    except ValidationError as e:
        raise ConfigurationError(f"invalid experiment config {path}: {e}") from e


def run_name(algorithm: Algorithm, action_repr: ActionRepr, seed: int) -> str:
    """Directory name of one run, e.g. cppo_ar2_seed3"""
    return f"{Algorithm(algorithm).value}_{ActionRepr(action_repr).value}_seed{seed}"


def ensure_writable(directory: str) -> None:
    """Create `directory` if needed and prove a file can be written there"""
    try:
        os.makedirs(directory, exist_ok=True)
        marker = os.path.join(directory, ".write_check")
        with open(marker, "w", encoding="utf-8") as f:
            f.write("")
        os.remove(marker)
    except OSError as e:
        raise ConfigurationError(f"output directory {directory} is not writable: {e}") from e


# ===== Per-run summary =====
def epochs_to_threshold(rewards: Sequence[float], threshold: float) -> Optional[int]:
    """First (1-based) epoch whose mean episode reward exceeds `threshold`"""
    for i, reward in enumerate(rewards):
        if reward > threshold:
            return i + 1
    return None


def summarize_series(series: Dict[str, List[float]], final_window: int,
                     reward_threshold: float) -> RunSummary:
    """Final-window statistics of one run's per-epoch series"""
    cost = np.asarray(series.get("cost", []), dtype=float)
    reward = np.asarray(series.get("reward", []), dtype=float)
    tail_cost = cost[-final_window:]
    tail_reward = reward[-final_window:]
    return RunSummary(
        mean_final_cost=float(tail_cost.mean()) if tail_cost.size else 0.0,
        std_final_cost=float(tail_cost.std()) if tail_cost.size else 0.0,
        mean_final_reward=float(tail_reward.mean()) if tail_reward.size else 0.0,
        epochs_to_reward_threshold=epochs_to_threshold(reward, reward_threshold),
        final_window=final_window,
        reward_threshold=reward_threshold,
    )


def build_report(config: ExperimentConfig, seed: int, history: Sequence[EpochMetrics]) -> RunReport:
    """`config` must already be resolved"""
    series = {
        key: [float(getattr(m, attr)) for m in history] for key, attr in SERIES_FIELDS.items()
    }
    return RunReport(
        algorithm=config.trainer.algorithm,
        action_repr=config.env.action_repr,
        seed=seed,
        cost_limit=config.trainer.cost_limit,
        epochs_completed=len(history),
        series=series,
        summary=summarize_series(series, config.final_window, config.reward_threshold),
    )


def _write_json(path: str, payload: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(payload)
        f.write("\n")


def _plateaued(history: Sequence[EpochMetrics], patience: int, success_rate: float) -> bool:
    if patience <= 0 or len(history) < patience:
        return False
    return all(m.success_rate >= success_rate for m in history[-patience:])


# ===== Running =====
def run_seed(config: ExperimentConfig, seed: int) -> RunReport:
    """Train one seed to completion, logging a CSV row after every epoch"""
    config = config.resolved()
    run_dir = os.path.join(config.output_dir, run_name(config.trainer.algorithm, config.env.action_repr, seed))
    ensure_writable(run_dir)
    metrics_path = os.path.join(run_dir, METRICS_FILE)

    effective = config.model_copy(update={
        "seeds": [seed],
        "env": config.env.model_copy(update={"seed": seed}),
    })
    _write_json(os.path.join(run_dir, CONFIG_FILE), effective.model_dump_json(indent=2))
    pd.DataFrame(columns=METRICS_COLUMNS).to_csv(metrics_path, index=False, lineterminator="\n")

    trainer = Trainer(config.trainer, effective.env, seed)
    history: List[EpochMetrics] = []
    logger.info("Starting %s (%d epochs) in %s", os.path.basename(run_dir),
                config.trainer.max_epochs, run_dir)
    try:
        for _ in range(config.trainer.max_epochs):
            metrics = trainer.train_epoch()
            history.append(metrics)
            pd.DataFrame([metrics.csv_row()], columns=METRICS_COLUMNS).to_csv(
                metrics_path, mode="a", header=False, index=False, lineterminator="\n"
            )
            if _plateaued(history, config.plateau_patience, config.plateau_success_rate):
                logger.info("seed %d: success rate held >= %.2f for %d epochs, stopping at epoch %d",
                            seed, config.plateau_success_rate, config.plateau_patience, metrics.epoch)
                break
    except TrainingDiverged as e:
        e.seed = seed
        _write_json(os.path.join(run_dir, DIVERGED_FILE), json.dumps(
            {"message": e.args[0], "epoch": e.epoch, "seed": seed, "state": e.state}, indent=2
        ))
        logger.error("Run diverged: %s", e)
        raise

    report = build_report(config, seed, history)
    _write_json(os.path.join(run_dir, REPORT_FILE), report.model_dump_json(by_alias=True, indent=2))
    if config.save_checkpoint:
        trainer.save(os.path.join(run_dir, CHECKPOINT_FILE))
    return report


def run_experiment(config: ExperimentConfig, max_workers: int = MAX_WORKERS) -> List[RunReport]:
    """Run every seed of one (algorithm, action representation) cell; reports come back in seed order"""
    config = config.resolved()
    ensure_writable(config.output_dir)

    print("=" * 60)
    print(f"Experiment: {config.trainer.algorithm.value} / {config.env.action_repr.value} "
          f"on {config.env.arm}")
    print("=" * 60)
    print(f"  Seeds: {config.seeds}")
    print(f"  Epochs: {config.trainer.max_epochs} x {config.trainer.steps_per_epoch} steps")
    print(f"  Output: {config.output_dir}")

    workers = min(max_workers, len(config.seeds))
    if workers <= 1:
        reports = [run_seed(config, seed) for seed in config.seeds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_seed, config, seed) for seed in config.seeds]
            reports = [f.result() for f in futures]

    for report in reports:
        s = report.summary
        print(f"  {report.label}: final cost {s.mean_final_cost:.2f} +- {s.std_final_cost:.2f}, "
              f"final reward {s.mean_final_reward:.2f}, epochs to threshold {s.epochs_to_reward_threshold}")
    return reports


# ===== Summaries =====
def load_reports(runs_dir: str) -> List[RunReport]:
    """Every <run>/report.json under `runs_dir`"""
    if not os.path.isdir(runs_dir):
        raise ConfigurationError(f"runs directory not found: {runs_dir}")
    reports = []
    for entry in sorted(os.listdir(runs_dir)):
        path = os.path.join(runs_dir, entry, REPORT_FILE)
        if not os.path.isfile(path):
            continue
        with open(path, "r", encoding="utf-8") as f:
            raw = f.read()
        try:
            reports.append(RunReport.model_validate_json(raw))
        except ValidationError as e:
            raise ConfigurationError(f"invalid run report {path}: {e}") from e
    if not reports:
        raise ConfigurationError(f"no {REPORT_FILE} files found under {runs_dir}")
    return reports


@dataclass
class SummaryCell:
    algorithm: Algorithm
    action_repr: ActionRepr
    mean_cost: float
    std_cost: float
    mean_reward: float
    seeds: List[int]


@dataclass
class SummaryTable:
    """Final-window episode cost per (algorithm, action representation) cell"""
    cells: List[SummaryCell]
    final_window: int

    def cell(self, algorithm, action_repr) -> Optional[SummaryCell]:
        """The cell for one algorithm/representation pair, or None if no run covers it"""
        for c in self.cells:
            if c.algorithm == Algorithm(algorithm) and c.action_repr == ActionRepr(action_repr):
                return c
        return None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{
                "algorithm": c.algorithm.value,
                "action_repr": c.action_repr.value,
                "n_seeds": len(c.seeds),
                "mean_final_cost": c.mean_cost,
                "std_final_cost": c.std_cost,
                "mean_final_reward": c.mean_reward,
            } for c in self.cells],
            columns=["algorithm", "action_repr", "n_seeds", "mean_final_cost",
                     "std_final_cost", "mean_final_reward"],
        )

    def to_csv(self) -> str:
        return self.to_frame().to_csv(index=False, lineterminator="\n", float_format="%.6f")

    def render_text(self) -> str:
        """Action representations as rows, algorithms as columns, cells 'mean +- std'"""
        algorithms = sorted({c.algorithm for c in self.cells}, key=lambda a: a.value)
        reprs = sorted({c.action_repr for c in self.cells}, key=lambda r: r.value)
        header = ["repr"] + [a.value.upper() for a in algorithms]
        rows = []
        for r in reprs:
            row = [r.value.upper()]
            for a in algorithms:
                c = self.cell(a, r)
                row.append(f"{c.mean_cost:.1f} +- {c.std_cost:.1f}" if c else "-")
            rows.append(row)
        widths = [max(len(line[i]) for line in [header] + rows) for i in range(len(header))]

        def fmt(line: List[str]) -> str:
            return "  ".join(value.ljust(width) for value, width in zip(line, widths)).rstrip()

        lines = [
            f"Mean episode cost over the last {self.final_window} epochs (mean +- std across seeds)",
            fmt(header),
            "  ".join("-" * w for w in widths),
        ]
        lines.extend(fmt(row) for row in rows)
        return "\n".join(lines) + "\n"


def summarize_runs(reports: Sequence[RunReport], final_window: int) -> SummaryTable:
    """Mean/std across seeds of each run's mean final-window episode cost"""
    if not reports:
        raise ConfigurationError("need at least one run report to summarize")
    if final_window < 1:
        raise ConfigurationError(f"final window must be >= 1, got {final_window}")
    ordered = sorted(reports, key=lambda r: (r.algorithm.value, r.action_repr.value, r.seed))
    groups: Dict[tuple, List[RunReport]] = {}
    for report in ordered:
        groups.setdefault((report.algorithm, report.action_repr), []).append(report)

    cells = []
    for (algorithm, action_repr), group in groups.items():
        costs = []
        rewards = []
        for report in group:
            run = summarize_series(report.series, final_window, report.summary.reward_threshold)
            costs.append(run.mean_final_cost)
            rewards.append(run.mean_final_reward)
        cells.append(SummaryCell(
            algorithm=algorithm,
            action_repr=action_repr,
            mean_cost=float(np.mean(costs)),
            std_cost=float(np.std(costs)),
            mean_reward=float(np.mean(rewards)),
            seeds=[r.seed for r in group],
        ))
    return SummaryTable(cells=cells, final_window=final_window)


def write_summary(table: SummaryTable, runs_dir: str) -> Dict[str, str]:
    """Write summary.txt and summary.csv into `runs_dir` with LF line endings"""
    paths = {
        "text": os.path.join(runs_dir, SUMMARY_TEXT_FILE),
        "csv": os.path.join(runs_dir, SUMMARY_CSV_FILE),
    }
    with open(paths["text"], "w", encoding="utf-8", newline="\n") as f:
        f.write(table.render_text())
    with open(paths["csv"], "w", encoding="utf-8", newline="\n") as f:
        f.write(table.to_csv())
    return paths
