"""Baseline training strategies and the round-based loop they share.

Every strategy trains one classifier for ``rounds * round_epochs`` epochs. At
the start of each round it may pick extra samples (from the labeled set or
the unlabeled pool) that are appended to the training set for that round
only; the next round selects again from scratch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Tuple

import numpy as np

from .data import LabeledDataset, UnlabeledPool, minibatches, oversample_to_balance
from .errors import ConfigError
from .nn import SGD, MlpModel, SgdConfig, backward, forward, label_losses, one_hot

LABELED = "labeled"
UNLABELED = "unlabeled"


@dataclass(frozen=True)
class SelectionDecision:
    source: str  # LABELED or UNLABELED
    index: int
    assigned_label: int
    weight: float = 1.0
    # classifier's top-1 class when the decision was made
    predicted_label: int = -1

    def sort_key(self):
        return (self.source != LABELED, self.index)


@dataclass(frozen=True)
class StrategyConfig:
    lam: float = 0.6
    round_epochs: int = 10
    rounds: int = 20

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError("lambda must be positive")
        if self.round_epochs < 1 or self.rounds < 1:
            raise ConfigError("round_epochs and rounds must be at least 1")

    @property
    def total_epochs(self) -> int:
        return self.round_epochs * self.rounds


@dataclass
class AugmentedTrainSet:
    base: LabeledDataset
    additions: List[SelectionDecision] = field(default_factory=list)

    @property
    def n_base(self) -> int:
        return len(self.base)

    @property
    def n_add(self) -> int:
        return len(self.additions)

    def addition_arrays(self, labeled: LabeledDataset, pool: UnlabeledPool) -> Tuple[np.ndarray, np.ndarray]:
        if not self.additions:
            return np.empty((0, self.base.dim)), np.empty(0, dtype=np.int64)
        rows = [
            labeled.features[d.index] if d.source == LABELED else pool.features[d.index]
            for d in self.additions
        ]
        return np.vstack(rows), np.array([d.assigned_label for d in self.additions], dtype=np.int64)


def predict(classifier: MlpModel, features) -> Tuple[np.ndarray, np.ndarray]:
    """Class probabilities and top-1 predictions (ties go to the lowest class id)."""
    probs, _ = forward(classifier, features)
    return probs, np.argmax(probs, axis=1)


def _minor_mask(pred: np.ndarray, minors) -> np.ndarray:
    return np.isin(pred, np.fromiter(minors, dtype=np.int64))


def self_paced_select(
    classifier: MlpModel, pool: UnlabeledPool, minors, lam: float
) -> List[SelectionDecision]:
    """Pool samples predicted as a minor class whose pseudo-label loss is below ``lam``."""
    if len(pool) == 0:
        return []
    probs, pred = predict(classifier, pool.features)
    losses = label_losses(probs, pred)
    chosen = np.flatnonzero(_minor_mask(pred, minors) & (losses < lam))
    return [
        SelectionDecision(UNLABELED, int(i), int(pred[i]), 1.0, int(pred[i])) for i in chosen
    ]


def context_data_select(
    classifier: MlpModel, labeled: LabeledDataset, minors, lam: float
) -> List[SelectionDecision]:
    """Labeled samples predicted as a minor class with loss below ``lam``, kept at their true labels.

    The loss is measured against the predicted class, i.e. it gauges how
    confidently the sample lands in a minor class. Measured against the true
    label, a wrongly predicted sample could never pass (its loss is >= ln 2).
    """
    if len(labeled) == 0:
        return []
    probs, pred = predict(classifier, labeled.features)
    losses = label_losses(probs, pred)
    chosen = np.flatnonzero(_minor_mask(pred, minors) & (losses < lam))
    return [
        SelectionDecision(LABELED, int(i), int(labeled.labels[i]), 1.0, int(pred[i])) for i in chosen
    ]


class _IndexCycle:
    """Endless concatenation of seeded permutations of ``range(n)``."""

    def __init__(self, n: int, seed: int, stream: int):
        self.n = n
        self.rng = np.random.default_rng([seed, stream])
        self.buffer = np.empty(0, dtype=np.int64)

    def take(self, k: int) -> np.ndarray:
        while self.buffer.size < k:
            self.buffer = np.concatenate([self.buffer, self.rng.permutation(self.n)])
        out, self.buffer = self.buffer[:k], self.buffer[k:]
        return out


def train_epochs(
    classifier: MlpModel,
    optimizer: SGD,
    train_set: AugmentedTrainSet,
    labeled: LabeledDataset,
    pool: UnlabeledPool,
    epochs: int,
    first_epoch: int,
) -> None:
    """Minibatch SGD on ``mean loss over base + mean loss over additions``.

    Each step pairs a base batch with a batch drawn cyclically from the
    additions, and each half is averaged separately, so the added samples
    carry the same total weight as the base set.
    """
    cfg: SgdConfig = optimizer.config
    base = train_set.base
    m = classifier.out_dim
    x_add, y_add = train_set.addition_arrays(labeled, pool)
    n_add = y_add.size
    # separate stream so additions never perturb the base order
    add_stream = _IndexCycle(n_add, cfg.seed + 7919, first_epoch)
    for epoch in range(first_epoch, first_epoch + epochs):
        for batch in minibatches(len(base), cfg.batch_size, cfg.seed, epoch):
            x = base.features[batch]
            y = base.labels[batch]
            scale = np.full(batch.size, 1.0 / batch.size)
            if n_add:
                add_idx = add_stream.take(min(cfg.batch_size, n_add))
                x = np.vstack([x, x_add[add_idx]])
                y = np.concatenate([y, y_add[add_idx]])
                scale = np.concatenate([scale, np.full(add_idx.size, 1.0 / add_idx.size)])
            probs, cache = forward(classifier, x)
            grad = (probs - one_hot(y, m)) * scale[:, None]
            optimizer.step(classifier, backward(classifier, cache, grad, wrt_logits=True))


@dataclass
class RunContext:
    classifier: MlpModel
    optimizer: SGD
    labeled: LabeledDataset
    pool: UnlabeledPool
    minors: FrozenSet[int]
    seed: int
    epochs_done: int = 0
    round_index: int = 0

    def train(self, train_set: AugmentedTrainSet, epochs: int) -> None:
        train_epochs(
            self.classifier, self.optimizer, train_set, self.labeled, self.pool, epochs, self.epochs_done
        )
        self.epochs_done += epochs


@dataclass
class RoundResult:
    round_index: int
    epoch: int  # epochs completed when the round ends
    decisions: List[SelectionDecision]
    n_base: int
    info: Dict[str, float] = field(default_factory=dict)


class Strategy:
    """Plain training on the labeled set; subclasses change the base set or add selections."""

    name = "imbalanced"

    def __init__(self, config: Optional[StrategyConfig] = None):
        self.config = config or StrategyConfig()
        self.info: Dict[str, float] = {}

    def base_set(self, labeled: LabeledDataset, seed: int) -> LabeledDataset:
        return labeled

    def initialize(self, ctx: RunContext) -> None:
        pass

    def select(self, ctx: RunContext) -> List[SelectionDecision]:
        return []


class OversamplingStrategy(Strategy):
    name = "oversample"

    def base_set(self, labeled, seed):
        return oversample_to_balance(labeled, seed)


class SelfPacedStrategy(Strategy):
    name = "self_paced"

    def select(self, ctx):
        return self_paced_select(ctx.classifier, ctx.pool, ctx.minors, self.config.lam)


class ContextStrategy(Strategy):
    name = "context"

    def select(self, ctx):
        labeled = context_data_select(ctx.classifier, ctx.labeled, ctx.minors, self.config.lam)
        return labeled + self_paced_select(ctx.classifier, ctx.pool, ctx.minors, self.config.lam)


def strategy_imbalanced(config: Optional[StrategyConfig] = None) -> Strategy:
    return Strategy(config)


def strategy_oversampling(config: Optional[StrategyConfig] = None) -> Strategy:
    return OversamplingStrategy(config)


def strategy_self_paced(config: Optional[StrategyConfig] = None) -> Strategy:
    return SelfPacedStrategy(config)


def strategy_context(config: Optional[StrategyConfig] = None) -> Strategy:
    return ContextStrategy(config)


def run_rounds(
    strategy: Strategy,
    labeled: LabeledDataset,
    pool: UnlabeledPool,
    minors,
    classifier: MlpModel,
    sgd: SgdConfig,
    seed: int = 0,
    on_round: Optional[Callable[[RoundResult, RunContext], None]] = None,
) -> List[RoundResult]:
    """Run ``strategy`` for its configured rounds, mutating ``classifier`` in place."""
    minors = frozenset(int(c) for c in minors)
    if classifier.out_dim != labeled.num_classes or classifier.in_dim != labeled.dim:
        raise ConfigError("classifier shape does not match the dataset")
    ctx = RunContext(classifier, SGD(sgd), labeled, pool, minors, seed)
    base = strategy.base_set(labeled, seed)
    strategy.initialize(ctx)
    results = []
    for t in range(strategy.config.rounds):
        ctx.round_index = t
        strategy.info = {}
        decisions = sorted(strategy.select(ctx), key=SelectionDecision.sort_key)
        ctx.train(AugmentedTrainSet(base, decisions), strategy.config.round_epochs)
        result = RoundResult(t, ctx.epochs_done, decisions, len(base), dict(strategy.info))
        results.append(result)
        if on_round is not None:
            on_round(result, ctx)
    return results
