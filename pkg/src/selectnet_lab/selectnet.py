"""Learned data selection: a small sigmoid network scores each minor-predicted
candidate from (class probabilities, loss) and admits it above a threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .data import LabeledDataset, UnlabeledPool, oversample_to_balance
from .errors import ConfigError
from .nn import SGD, MlpModel, SgdConfig, backward, forward, init_mlp, label_losses
from .strategies import (
    LABELED,
    UNLABELED,
    AugmentedTrainSet,
    RoundResult,
    RunContext,
    SelectionDecision,
    Strategy,
    StrategyConfig,
    predict,
    run_rounds,
)

SELECTOR_HIDDEN = (8, 4)


@dataclass(frozen=True)
class SelectNetConfig(StrategyConfig):
    beta: float = 0.6
    selector_steps: int = 200
    selector_lr: float = 0.05
    selector_momentum: float = 0.9
    # 0 means full-batch selector updates
    selector_batch: int = 0
    init_epochs: int = 10
    reinit_selector: bool = False

    def __post_init__(self):
        super().__post_init__()
        if not 0 < self.beta < 1:
            raise ConfigError("beta must lie in (0, 1)")
        if self.selector_steps < 0 or not self.selector_lr > 0:
            raise ConfigError("selector_steps must be >= 0 and selector_lr > 0")
        if not 0 <= self.selector_momentum < 1:
            raise ConfigError("selector_momentum must lie in [0, 1)")
        if self.init_epochs < 0 or self.selector_batch < 0:
            raise ConfigError("init_epochs and selector_batch must be >= 0")


@dataclass
class CandidateSet:
    """Samples from the labeled set and the pool whose top-1 class is a minor class."""

    source: np.ndarray  # True for labeled rows
    index: np.ndarray
    predicted: np.ndarray
    # label the loss is measured against: true label (labeled) or prediction (pool)
    target: np.ndarray
    probs: np.ndarray
    losses: np.ndarray

    def __len__(self):
        return self.index.size

    @property
    def features(self) -> np.ndarray:
        return np.hstack([self.probs, self.losses[:, None]])

    def categories(self, labeled_labels, pool_labels) -> dict:
        """Four-way split of the candidates against ground truth (for logging only)."""
        lab = self.source
        truth = np.zeros(lab.size, dtype=np.int64)
        if lab.any():
            truth[lab] = np.asarray(labeled_labels)[self.index[lab]]
        if (~lab).any():
            truth[~lab] = np.asarray(pool_labels)[self.index[~lab]]
        right = self.predicted == truth
        return {
            "labeled_confused": int(np.sum(lab & ~right)),
            "labeled_minor": int(np.sum(lab & right)),
            "unlabeled_confused": int(np.sum(~lab & ~right)),
            "unlabeled_minor": int(np.sum(~lab & right)),
        }


def build_candidates(
    classifier: MlpModel, labeled: LabeledDataset, pool: UnlabeledPool, minors
) -> CandidateSet:
    minors_arr = np.fromiter(minors, dtype=np.int64)
    parts = []
    for is_labeled, features in ((True, labeled.features), (False, pool.features)):
        if features.shape[0] == 0:
            continue
        probs, pred = predict(classifier, features)
        target = labeled.labels if is_labeled else pred
        keep = np.flatnonzero(np.isin(pred, minors_arr))
        parts.append(
            (
                np.full(keep.size, is_labeled),
                keep,
                pred[keep],
                target[keep],
                probs[keep],
                label_losses(probs[keep], target[keep]),
            )
        )
    m = classifier.out_dim
    if not parts:
        empty = np.empty(0, dtype=np.int64)
        return CandidateSet(np.empty(0, dtype=bool), empty, empty, empty, np.empty((0, m)), np.empty(0))
    return CandidateSet(*(np.concatenate(cols) for cols in zip(*parts)))


def init_selector(num_classes: int, seed) -> MlpModel:
    return init_mlp((num_classes + 1, *SELECTOR_HIDDEN, 1), seed, "relu", "sigmoid")


def selector_scores(selector: MlpModel, candidates: CandidateSet) -> np.ndarray:
    if len(candidates) == 0:
        return np.empty(0)
    return forward(selector, candidates.features)[0][:, 0]


def selector_objective(selector: MlpModel, candidates: CandidateSet, lam: float) -> float:
    """Mean of ``score * (loss - lam)`` over the candidates; 0 when there are none."""
    if len(candidates) == 0:
        return 0.0
    return float(np.mean(selector_scores(selector, candidates) * (candidates.losses - lam)))


def train_selector(
    selector: MlpModel,
    candidates: CandidateSet,
    lam: float,
    steps: int,
    lr: float,
    seed: int,
    momentum: float = 0.9,
    batch_size: int = 0,
) -> MlpModel:
    """Minimise the selector objective with SGD; a no-op without candidates.

    Low-loss candidates (loss < lam) pull their score toward 1, high-loss ones
    toward 0.
    """
    n = len(candidates)
    if n == 0 or steps == 0:
        return selector
    z = candidates.features
    coeff = candidates.losses - lam
    opt = SGD(SgdConfig(lr, momentum, max(1, batch_size or n), seed))
    rng = np.random.default_rng(seed)
    for _ in range(steps):
        if batch_size and batch_size < n:
            idx = rng.choice(n, size=batch_size, replace=False)
        else:
            idx = slice(None)
        zb, cb = z[idx], coeff[idx]
        _, cache = forward(selector, zb)
        opt.step(selector, backward(selector, cache, (cb / cb.size)[:, None]))
    return selector


def threshold_select(
    selector: MlpModel, candidates: CandidateSet, beta: float
) -> List[SelectionDecision]:
    """Admit candidates scoring strictly above ``beta``, with hard weight 1."""
    scores = selector_scores(selector, candidates)
    out = []
    for k in np.flatnonzero(scores > beta):
        out.append(
            SelectionDecision(
                LABELED if candidates.source[k] else UNLABELED,
                int(candidates.index[k]),
                int(candidates.target[k]),
                1.0,
                int(candidates.predicted[k]),
            )
        )
    return out


class SelectNetStrategy(Strategy):
    """Oversampled warm start, then per round: candidates, selector update, threshold."""

    name = "selectnet"

    def __init__(self, config: Optional[SelectNetConfig] = None):
        super().__init__(config or SelectNetConfig())
        self.selector: Optional[MlpModel] = None
        self.last_candidates: Optional[CandidateSet] = None

    def initialize(self, ctx: RunContext) -> None:
        cfg = self.config
        if cfg.init_epochs:
            ctx.train(AugmentedTrainSet(oversample_to_balance(ctx.labeled, ctx.seed)), cfg.init_epochs)
        self.selector = init_selector(ctx.labeled.num_classes, [ctx.seed, 1])

    def select(self, ctx: RunContext) -> List[SelectionDecision]:
        cfg = self.config
        candidates = build_candidates(ctx.classifier, ctx.labeled, ctx.pool, ctx.minors)
        if cfg.reinit_selector or self.selector is None:
            self.selector = init_selector(ctx.labeled.num_classes, [ctx.seed, 1, ctx.round_index])
        before = selector_objective(self.selector, candidates, cfg.lam)
        train_selector(
            self.selector,
            candidates,
            cfg.lam,
            cfg.selector_steps,
            cfg.selector_lr,
            seed=ctx.seed * 1000 + ctx.round_index,
            momentum=cfg.selector_momentum,
            batch_size=cfg.selector_batch,
        )
        self.last_candidates = candidates
        self.info = {
            "candidates": len(candidates),
            "selector_objective_before": before,
            "selector_objective_after": selector_objective(self.selector, candidates, cfg.lam),
        }
        return threshold_select(self.selector, candidates, cfg.beta)


def run_selectnet(
    labeled: LabeledDataset,
    pool: UnlabeledPool,
    minors,
    classifier: MlpModel,
    sgd: SgdConfig,
    config: Optional[SelectNetConfig] = None,
    seed: int = 0,
    on_round=None,
) -> Tuple[MlpModel, List[RoundResult]]:
    """Full alternating loop; ``classifier`` is trained in place and returned."""
    strategy = SelectNetStrategy(config)
    results = run_rounds(strategy, labeled, pool, minors, classifier, sgd, seed, on_round)
    return classifier, results
