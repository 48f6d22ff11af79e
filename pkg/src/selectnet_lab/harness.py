"""Seeded multi-strategy experiments with CSV/JSON output."""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import metrics
from .data import (
    CarvedSplit,
    ImbalanceSpec,
    LabeledDataset,
    carve_imbalance,
    generate_gaussian_blobs,
    generate_two_moons,
    held_out_test_split,
    load_dataset,
)
from .errors import ConfigError, ParseError, SelectNetLabError
from .nn import SgdConfig, init_mlp
from .selectnet import SelectNetConfig, SelectNetStrategy
from .strategies import (
    ContextStrategy,
    OversamplingStrategy,
    RoundResult,
    RunContext,
    SelectionDecision,
    SelfPacedStrategy,
    Strategy,
    StrategyConfig,
    predict,
    run_rounds,
)

log = logging.getLogger(__name__)

STRATEGIES = {
    "imbalanced": Strategy,
    "oversample": OversamplingStrategy,
    "self_paced": SelfPacedStrategy,
    "context": ContextStrategy,
    "selectnet": SelectNetStrategy,
}

# keys a strategy override ("selectnet.beta = 0.5") may touch
STRATEGY_KEYS = (
    "lam",
    "rounds",
    "round_epochs",
    "beta",
    "selector_steps",
    "selector_lr",
    "selector_momentum",
    "selector_batch",
    "init_epochs",
    "reinit_selector",
)

KEY_ALIASES = {"lambda": "lam", "strategy": "strategies", "seed": "seeds"}


class RuntimeFailure(SelectNetLabError, RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    # dataset: "blobs", "moons", or a path to a CSV/binary dataset file
    dataset: str = "blobs"
    dataset_format: str = ""
    num_classes: int = 10
    dim: int = 16
    per_class: int = 1000
    separation: float = 3.0
    moons_noise: float = 0.2
    data_seed: int = 0
    test_fraction: float = 0.1
    minor_classes: Tuple[int, ...] = (0, 2, 6, 7)
    minor_keep: float = 0.01
    major_keep: float = 0.90
    hidden: Tuple[int, ...] = (32,)
    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 64
    strategies: Tuple[str, ...] = ("imbalanced", "oversample", "self_paced", "context", "selectnet")
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    lam: float = 0.6
    rounds: int = 20
    round_epochs: int = 10
    beta: float = 0.6
    selector_steps: int = 200
    selector_lr: float = 0.05
    selector_momentum: float = 0.9
    selector_batch: int = 0
    init_epochs: int = 10
    reinit_selector: bool = False
    out: str = "results"
    plots: bool = True
    overrides: Dict[str, Dict[str, object]] = field(default_factory=dict)

    def validate(self) -> "ExperimentConfig":
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        unknown = [s for s in self.strategies if s not in STRATEGIES]
        unknown += [s for s in self.overrides if s not in STRATEGIES]
        if unknown:
            raise ConfigError(f"unknown strategies {unknown}; choose from {sorted(STRATEGIES)}")
        if len(set(self.strategies)) != len(self.strategies) or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("strategies and seeds must not repeat")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden widths must be positive")
        self.sgd_config(0)
        self.imbalance_spec()
        for name in self.strategies:
            self.strategy_config(name)
        return self

    def imbalance_spec(self) -> ImbalanceSpec:
        return ImbalanceSpec(frozenset(self.minor_classes), self.minor_keep, self.major_keep, self.data_seed)

    def sgd_config(self, seed: int) -> SgdConfig:
        return SgdConfig(self.learning_rate, self.momentum, self.batch_size, seed)

    def strategy_config(self, name: str) -> StrategyConfig:
        values = {k: getattr(self, k) for k in STRATEGY_KEYS}
        values.update(self.overrides.get(name, {}))
        if name == "selectnet":
            return SelectNetConfig(**values)
        return StrategyConfig(values["lam"], values["round_epochs"], values["rounds"])

    def build_strategy(self, name: str) -> Strategy:
        return STRATEGIES[name](self.strategy_config(name))

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        return json.loads(json.dumps(out))


def _convert(name: str, raw: str, template):
    raw = raw.strip()
    try:
        if isinstance(template, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(template, int):
            return int(raw)
        if isinstance(template, float):
            return float(raw)
        if isinstance(template, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if template and isinstance(template[0], int):
                return tuple(int(x) for x in items)
            return tuple(items)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from exc


def parse_config(text: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    ``<strategy>.<key> = value`` overrides one strategy's round settings.
    """
    cfg = replace(base or ExperimentConfig())
    cfg.overrides = {k: dict(v) for k, v in cfg.overrides.items()}
    defaults = ExperimentConfig()
    known = {f.name for f in fields(ExperimentConfig)} - {"overrides"}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if "." in key:
            strategy, sub = key.split(".", 1)
            sub = KEY_ALIASES.get(sub, sub)
            if sub not in STRATEGY_KEYS:
                raise ConfigError(f"line {lineno}: {sub!r} cannot be overridden per strategy")
            cfg.overrides.setdefault(strategy, {})[sub] = _convert(key, value, getattr(defaults, sub))
            continue
        key = KEY_ALIASES.get(key, key)
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _convert(key, value, getattr(defaults, key)))
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


@dataclass
class Experiment:
    """Everything every strategy in one experiment shares."""

    config: ExperimentConfig
    source: LabeledDataset
    test: LabeledDataset
    split: CarvedSplit

    @property
    def minors(self):
        return self.split.spec.minor_classes


def prepare_experiment(config: ExperimentConfig) -> Experiment:
    config.validate()
    if config.dataset == "blobs":
        source = generate_gaussian_blobs(
            config.num_classes, config.per_class, config.dim, config.separation, config.data_seed
        )
    elif config.dataset == "moons":
        source = generate_two_moons(config.per_class, config.moons_noise, config.data_seed)
    else:
        source = load_dataset(config.dataset, config.dataset_format or None)
    if any(c >= source.num_classes for c in config.minor_classes):
        raise ConfigError("minor class id outside the dataset's classes")
    pool_source, test = held_out_test_split(source, config.test_fraction, config.data_seed)
    split = carve_imbalance(pool_source, config.imbalance_spec())
    return Experiment(config, source, test, split)


@dataclass
class RoundRecord:
    round_index: int
    epoch: int
    scores: metrics.PerClassMetrics
    counts: metrics.SelectionCounts
    n_base: int
    decisions: List[SelectionDecision]
    info: Dict[str, float]


@dataclass
class RunRecord:
    strategy: str
    seed: int
    rounds: List[RoundRecord]

    @property
    def final(self) -> metrics.PerClassMetrics:
        return self.rounds[-1].scores


def run_one(exp: Experiment, strategy_name: str, seed: int) -> RunRecord:
    cfg = exp.config
    split = exp.split
    strategy = cfg.build_strategy(strategy_name)
    # identical initial weights for every strategy under the same seed
    classifier = init_mlp((split.labeled.dim, *cfg.hidden, split.labeled.num_classes), seed)
    rounds: List[RoundRecord] = []

    def on_round(result: RoundResult, ctx: RunContext):
        _, pred = predict(ctx.classifier, exp.test.features)
        scores = metrics.evaluate(exp.test.labels, pred, exp.test.num_classes)
        counts = metrics.selection_counts_for_pool(result.decisions, split.labeled.labels, split.pool)
        rounds.append(
            RoundRecord(
                result.round_index, result.epoch, scores, counts, result.n_base, result.decisions, result.info
            )
        )

    run_rounds(strategy, split.labeled, split.pool, exp.minors, classifier, cfg.sgd_config(seed), seed, on_round)
    return RunRecord(strategy_name, seed, rounds)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def metrics_csv(record: RunRecord) -> str:
    m = record.final.num_classes
    header = ["round", "epoch", "overall_acc"]
    for c in range(m):
        header += [f"precision_{c}", f"recall_{c}", f"f1_{c}"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in record.rounds:
        row = [r.round_index, r.epoch, _fmt(r.scores.accuracy)]
        for c in range(m):
            row += [_fmt(r.scores.precision[c]), _fmt(r.scores.recall[c]), _fmt(r.scores.f1[c])]
        writer.writerow(row)
    return buf.getvalue()


def selections_csv(record: RunRecord) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["round", *metrics.CATEGORIES, "total_added"])
    for r in record.rounds:
        writer.writerow([r.round_index, *(getattr(r.counts, k) for k in metrics.CATEGORIES), r.counts.total])
    return buf.getvalue()


def decisions_csv(record: RunRecord) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["round", "source", "index", "assigned_label", "predicted_label"])
    for r in record.rounds:
        for d in r.decisions:
            writer.writerow([r.round_index, d.source, d.index, d.assigned_label, d.predicted_label])
    return buf.getvalue()


def write_run(record: RunRecord, out_dir: Path) -> List[Path]:
    stem = f"{record.strategy}_{record.seed}"
    written = []
    for prefix, text in (
        ("metrics", metrics_csv(record)),
        ("selections", selections_csv(record)),
        ("decisions", decisions_csv(record)),
    ):
        path = out_dir / f"{prefix}_{stem}.csv"
        path.write_text(text)
        written.append(path)
    return written


def final_row(scores: metrics.PerClassMetrics) -> Dict[str, float]:
    row = {"overall_acc": scores.accuracy}
    for c in range(scores.num_classes):
        row[f"recall_{c}"] = float(scores.recall[c])
    for c in range(scores.num_classes):
        row[f"f1_{c}"] = float(scores.f1[c])
    return row


def summarize(
    final_rows: Dict[str, List[Dict[str, float]]], minor_classes: Sequence[int] = ()
) -> dict:
    """Median over seeds per strategy; marks the best strategy in each column.

    ``final_rows`` maps strategy name to one row of final-round scores per seed.
    """
    minors = sorted(int(c) for c in minor_classes)
    rows = []
    for strategy, per_seed in final_rows.items():
        if not per_seed:
            raise ConfigError(f"no records for strategy {strategy!r}")
        columns = list(per_seed[0])
        row = {"strategy": strategy, "seeds": len(per_seed)}
        for col in columns:
            row[col] = statistics.median(r[col] for r in per_seed)
        if minors:
            row["minor_recall_mean"] = statistics.median(
                float(np.mean([r[f"recall_{c}"] for c in minors])) for r in per_seed
            )
        rows.append(row)
    value_cols = [k for k in rows[0] if k not in ("strategy", "seeds")]
    best = {}
    for col in value_cols:
        top = max(r[col] for r in rows)
        best[col] = [r["strategy"] for r in rows if r[col] == top]
    for row in rows:
        row["best_columns"] = [c for c in value_cols if row["strategy"] in best[c]]
    return {
        "aggregate": "median",
        "minor_classes": minors,
        "minor_columns": [f"{kind}_{c}" for c in minors for kind in ("recall", "f1")],
        "columns": value_cols,
        "rows": rows,
        "best": best,
    }


def summarize_records(records: Sequence[RunRecord], minor_classes=()) -> dict:
    grouped: Dict[str, List[Dict[str, float]]] = {}
    for rec in records:
        grouped.setdefault(rec.strategy, []).append(final_row(rec.final))
    return summarize(grouped, minor_classes)


def read_metrics_dir(in_dir) -> Tuple[Dict[str, List[Dict[str, float]]], List[int]]:
    """Final-round rows per strategy from ``metrics_*.csv`` plus the recorded minor classes."""
    in_dir = Path(in_dir)
    meta_path = in_dir / "experiment.json"
    minors: List[int] = []
    strategies: Optional[List[str]] = None
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        minors = meta.get("minor_classes", [])
        strategies = meta.get("config", {}).get("strategies")
    grouped: Dict[str, List[Dict[str, float]]] = {}
    files = sorted(in_dir.glob("metrics_*.csv"))
    if not files:
        raise ConfigError(f"no metrics_*.csv files in {in_dir}")
    for path in files:
        strategy = path.stem[len("metrics_") :].rsplit("_", 1)[0]
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ParseError(f"{path.name} has no rounds", line=2)
        last = rows[-1]
        m = sum(1 for k in last if k.startswith("recall_"))
        row = {"overall_acc": float(last["overall_acc"])}
        row.update({f"recall_{c}": float(last[f"recall_{c}"]) for c in range(m)})
        row.update({f"f1_{c}": float(last[f"f1_{c}"]) for c in range(m)})
        grouped.setdefault(strategy, []).append(row)
    if strategies:
        grouped = {s: grouped[s] for s in strategies if s in grouped}
    return grouped, minors


def summarize_dir(in_dir, plots: bool = True) -> dict:
    """Rebuild ``summary.json`` (and figures) from the CSVs of a finished run."""
    grouped, minors = read_metrics_dir(in_dir)
    summary = summarize(grouped, minors)
    try:
        (Path(in_dir) / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        if plots:
            from .plots import render_figures

            render_figures(in_dir, summary)
    except OSError as exc:
        raise RuntimeFailure(f"cannot write summary to {in_dir}: {exc}") from exc
    return summary


def run_experiment(
    config: ExperimentConfig, out_dir=None, write: bool = True, plots: Optional[bool] = None
) -> Tuple[List[RunRecord], dict]:
    """Run every (strategy, seed) pair on one shared split; returns records and summary."""
    exp = prepare_experiment(config)
    out = Path(out_dir if out_dir is not None else config.out)
    if write:
        try:
            out.mkdir(parents=True, exist_ok=True)
            meta = {
                "config": config.to_dict(),
                "minor_classes": sorted(exp.minors),
                "labeled_counts": exp.split.labeled.class_counts().tolist(),
                "pool_size": len(exp.split.pool),
                "test_size": len(exp.test),
                "imbalance_ratio": exp.split.imbalance_ratio,
            }
            (out / "experiment.json").write_text(json.dumps(meta, indent=2) + "\n")
        except OSError as exc:
            raise RuntimeFailure(f"cannot write to {out}: {exc}") from exc
    records = []
    for strategy in config.strategies:
        for seed in config.seeds:
            log.info("running %s seed %d", strategy, seed)
            rec = run_one(exp, strategy, seed)
            records.append(rec)
            if write:
                try:
                    write_run(rec, out)
                except OSError as exc:
                    done = ", ".join(f"{r.strategy}/{r.seed}" for r in records[:-1]) or "none"
                    raise RuntimeFailure(
                        f"writing {strategy}/{seed} failed ({exc}); completed runs on disk: {done}"
                    ) from exc
    summary = summarize_records(records, sorted(exp.minors))
    if write:
        try:
            (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
            if config.plots if plots is None else plots:
                from .plots import render_figures

                render_figures(out, summary)
        except OSError as exc:
            raise RuntimeFailure(f"writing the summary to {out} failed: {exc}; per-run CSVs are complete") from exc
    return records, summary
