"""Figures rendered next to the CSV output of a run.

All figures are built from the emitted CSV files, so ``run`` and
``summarize`` draw exactly the same thing.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import CATEGORIES  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 6.0

params = {
    "axes.labelsize": 10,
    "axes.titlesize": 10,
    "font.size": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": [fig_width, fig_width * golden_mean],
    "figure.dpi": 100,
    "lines.linewidth": 1.2,
    "lines.markersize": 3,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

CATEGORY_COLORS = {
    "labeled_confused": "#d95f02",
    "labeled_minor": "#7570b3",
    "unlabeled_confused": "#e7298a",
    "unlabeled_minor": "#1b9e77",
}


def new(nrows=1, ncols=1, **kw):
    with plt.rc_context(params):
        return plt.subplots(nrows=nrows, ncols=ncols, **kw)


def save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def _read_csv(path: Path) -> List[Dict[str, str]]:
    with path.open() as fh:
        return list(csv.DictReader(fh))


def _runs(out_dir: Path, prefix: str) -> Dict[str, Dict[int, List[Dict[str, str]]]]:
    runs: Dict[str, Dict[int, List[Dict[str, str]]]] = {}
    for path in sorted(out_dir.glob(f"{prefix}_*.csv")):
        strategy, seed = path.stem[len(prefix) + 1 :].rsplit("_", 1)
        runs.setdefault(strategy, {})[int(seed)] = _read_csv(path)
    return runs


def plot_selection_counts(rows, title: str, path) -> Path:
    """Per-round additions split into the four selection categories."""
    fig, ax = new()
    rounds = [int(r["round"]) for r in rows]
    for cat in CATEGORIES:
        ax.plot(rounds, [int(r[cat]) for r in rows], marker="o", label=cat.replace("_", "-"),
                color=CATEGORY_COLORS[cat])
    ax.set_xlabel("round")
    ax.set_ylabel("samples added")
    ax.set_title(title)
    ax.legend(frameon=False)
    return save(fig, path)


def plot_accuracy_curves(metrics_runs, path) -> Path:
    """Median (over seeds) test accuracy per round, one line per strategy."""
    fig, ax = new()
    for strategy, by_seed in metrics_runs.items():
        seeds = sorted(by_seed)
        acc = np.array([[float(r["overall_acc"]) for r in by_seed[s]] for s in seeds])
        epochs = [int(r["epoch"]) for r in by_seed[seeds[0]]]
        ax.plot(epochs, np.median(acc, axis=0), marker="o", label=strategy)
    ax.set_xlabel("epoch")
    ax.set_ylabel("test accuracy (median over seeds)")
    ax.legend(frameon=False)
    return save(fig, path)


def plot_class_recall(summary: dict, path) -> Path:
    """Grouped bars of final per-class recall; minor-class tick labels in bold."""
    rows = summary["rows"]
    classes = sorted(int(c.split("_")[1]) for c in rows[0] if c.startswith("recall_"))
    minors = set(summary.get("minor_classes", []))
    fig, ax = new(figsize=[fig_width * 1.4, fig_width * golden_mean])
    width = 0.8 / len(rows)
    x = np.arange(len(classes))
    for k, row in enumerate(rows):
        ax.bar(x + (k - (len(rows) - 1) / 2) * width, [row[f"recall_{c}"] for c in classes],
               width, label=row["strategy"])
    ax.set_xticks(x)
    ax.set_xticklabels([str(c) for c in classes])
    for tick, c in zip(ax.get_xticklabels(), classes):
        if c in minors:
            tick.set_fontweight("bold")
    ax.set_xlabel("class (minor classes in bold)")
    ax.set_ylabel("recall (median over seeds)")
    ax.set_ylim(0, 1.05)
    ax.legend(frameon=False, ncol=min(len(rows), 5), loc="upper center", bbox_to_anchor=(0.5, 1.15))
    return save(fig, path)


def render_figures(out_dir, summary: dict) -> List[Path]:
    out_dir = Path(out_dir)
    written = []
    metrics_runs = _runs(out_dir, "metrics")
    if metrics_runs:
        written.append(plot_accuracy_curves(metrics_runs, out_dir / "fig_accuracy.png"))
    written.append(plot_class_recall(summary, out_dir / "fig_class_recall.png"))
    for strategy, by_seed in _runs(out_dir, "selections").items():
        for seed, rows in sorted(by_seed.items()):
            if any(int(r["total_added"]) for r in rows):
                written.append(
                    plot_selection_counts(rows, f"{strategy}, seed {seed}",
                                          out_dir / f"fig_selections_{strategy}_{seed}.png")
                )
    return written

