"""
Plotting
Learning curves (training loss, evaluation accuracy) from a metrics CSV.
"""
import csv
import logging
from pathlib import Path
from typing import Dict, List, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

COLORS = {"loss": "#c0392b", "accuracy": "#2471a3"}


def read_metrics(path: Union[str, Path]) -> Dict[str, List[float]]:
    """Columns of a ``step,loss,accuracy,lr`` CSV as float lists."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Metrics file not found: {path}")
    with path.open("r", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} has no metric rows")
    missing = {"step", "loss", "accuracy"} - set(rows[0])
    if missing:
        raise ValueError(f"{path} is missing columns {sorted(missing)}")
    return {key: [float(row[key]) for row in rows] for key in rows[0]}


def plot_metrics(metrics_path: Union[str, Path], out_path: Union[str, Path]) -> Path:
    """
    Two stacked panels against step; the image format follows ``out_path``'s suffix.

    Returns:
        Path of the written figure
    """
    metrics = read_metrics(metrics_path)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    fig, (loss_ax, acc_ax) = plt.subplots(2, 1, figsize=(7, 6), sharex=True, constrained_layout=True)
    loss_ax.plot(metrics["step"], metrics["loss"], color=COLORS["loss"], marker="o", markersize=3)
    loss_ax.set_ylabel("train loss")
    loss_ax.set_title(Path(metrics_path).parent.name or "run")
    acc_ax.plot(metrics["step"], metrics["accuracy"], color=COLORS["accuracy"], marker="o", markersize=3)
    acc_ax.set_ylabel("eval accuracy")
    acc_ax.set_ylim(0.0, 1.0)
    acc_ax.set_xlabel("step")
    for ax in (loss_ax, acc_ax):
        ax.grid(True, alpha=0.3)

    fig.savefig(out_path)
    plt.close(fig)
    logger.info(f"Learning curve written to {out_path}")
    return out_path
