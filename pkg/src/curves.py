"""Learning-curve files: per-epoch reward/cost tables and SVG line charts"""
import logging
import os
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .errors import ConfigurationError  # noqa: E402
from .schemas import Algorithm, ActionRepr, RunReport  # noqa: E402

logger = logging.getLogger(__name__)

REWARD_CURVES = "reward_curves"
COST_CURVES = "cost_curves"

_ALGORITHM_COLORS = {Algorithm.PPO: "tab:red", Algorithm.CPPO: "tab:blue"}
_REPR_STYLES = {ActionRepr.AR1: "-", ActionRepr.AR2: "--"}


def curve_frame(reports: Sequence[RunReport], key: str) -> pd.DataFrame:
    """Columns: epoch, then one column per run; shorter runs are padded with blanks"""
    ordered = sorted(reports, key=lambda r: (r.algorithm.value, r.action_repr.value, r.seed))
    n_epochs = max(len(r.series.get(key, [])) for r in ordered)
    frame = pd.DataFrame({"epoch": range(1, n_epochs + 1)})
    for report in ordered:
        values = report.series.get(key, [])
        frame[report.label] = pd.Series(values, index=range(len(values)), dtype=float)
    return frame


def _plot(frame: pd.DataFrame, reports: Sequence[RunReport], ylabel: str, title: str,
          path: str, cost_limit: Optional[float] = None) -> None:
    by_label = {r.label: r for r in reports}
    fig, ax = plt.subplots(figsize=(7, 4))
    for label in frame.columns[1:]:
        report = by_label[label]
        ax.plot(frame["epoch"], frame[label], label=label, gid=label,
                color=_ALGORITHM_COLORS[report.algorithm],
                linestyle=_REPR_STYLES[report.action_repr], linewidth=1.2)
    if cost_limit is not None:
        ax.axhline(cost_limit, color="black", linestyle=":", linewidth=1.0,
                   label=f"cost limit {cost_limit:g}", gid="cost_limit")
    ax.set_xlabel("Epoch")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    # fixed hash salt and no date keep the SVG byte-stable across runs
    with matplotlib.rc_context({"svg.hashsalt": "safe-arm-rl"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_curves(reports: Sequence[RunReport], path: str) -> Dict[str, str]:
    """Write reward/cost curve CSVs and SVG charts into directory `path`"""
    if not reports:
        raise ConfigurationError("need at least one run report to plot")
    os.makedirs(path, exist_ok=True)
    written = {}
    limits = sorted({r.cost_limit for r in reports})
    cost_limit = limits[0] if len(limits) == 1 else None
    if len(limits) > 1:
        logger.warning("runs use different cost limits %s; no limit line drawn", limits)

    for name, key, ylabel in (
        (REWARD_CURVES, "reward", "Mean episode reward"),
        (COST_CURVES, "cost", "Mean episode cost"),
    ):
        frame = curve_frame(reports, key)
        csv_path = os.path.join(path, f"{name}.csv")
        frame.to_csv(csv_path, index=False, lineterminator="\n")
        svg_path = os.path.join(path, f"{name}.svg")
        _plot(frame, reports, ylabel, f"{ylabel}: PPO vs cPPO", svg_path,
              cost_limit=cost_limit if key == "cost" else None)
        written[f"{name}.csv"] = csv_path
        written[f"{name}.svg"] = svg_path
    logger.info("Wrote learning curves for %d runs to %s", len(reports), path)
    return written
