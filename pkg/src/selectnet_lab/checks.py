"""Self-contained property checks, run by ``selectnet-lab selfcheck``.

Each check returns a ``CheckResult``; none of them reuse the code path they
verify for computing the expected answer.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from .data import ImbalanceSpec, LabeledDataset, carve_imbalance, oversample_to_balance
from .nn import MlpModel, backward, forward, init_mlp, one_hot
from .selectnet import CandidateSet, init_selector, selector_objective, selector_scores, train_selector
from .strategies import self_paced_select
from .data import UnlabeledPool


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(name: str, fn: Callable[[], tuple]) -> CheckResult:
    start = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, bool(passed), detail, time.perf_counter() - start)


# gradient oracle ---------------------------------------------------------------


def _loss_and_grad(model: MlpModel, x, target, fused: bool):
    """Scalar loss and dL/d(output) (or dL/d(logits) when ``fused``) for a model's head."""
    out, cache = forward(model, x)
    n = x.shape[0]
    if model.layers[-1].activation == "softmax":
        p_true = np.sum(out * target, axis=1)
        loss = -np.mean(np.log(p_true))
        grad = (out - target) / n if fused else -(target / out) / n
    else:
        loss = np.sum(out * target) / n
        grad = target / n
    return loss, grad, cache


def random_mlp(rng: np.random.Generator, max_params: int = 200) -> MlpModel:
    while True:
        n_hidden = int(rng.integers(1, 3))
        sizes = [int(rng.integers(2, 6))]
        sizes += [int(rng.integers(2, 7)) for _ in range(n_hidden)]
        head = str(rng.choice(["softmax", "sigmoid", "identity"]))
        sizes.append(int(rng.integers(2, 5)))
        model = init_mlp(sizes, int(rng.integers(1 << 30)), str(rng.choice(["relu", "sigmoid"])), head)
        if model.num_parameters <= max_params:
            # mix the hidden activations layer by layer
            for layer in model.layers[:-1]:
                layer.activation = str(rng.choice(["relu", "sigmoid"]))
            for layer in model.layers:
                layer.bias += rng.normal(scale=0.1, size=layer.bias.shape)
            return model


def gradient_check(model: MlpModel, x, target, h: float = 1e-5, fused: bool = False) -> float:
    """Largest relative error between backprop and central finite differences."""
    _, grad, cache = _loss_and_grad(model, x, target, fused)
    analytic = backward(model, cache, grad, wrt_logits=fused)
    worst = 0.0
    for layer, (gw, gb) in zip(model.layers, analytic):
        for param, g in ((layer.weights, gw), (layer.bias, gb)):
            for idx in np.ndindex(param.shape):
                old = param[idx]
                param[idx] = old + h
                up = _loss_and_grad(model, x, target, fused)[0]
                param[idx] = old - h
                down = _loss_and_grad(model, x, target, fused)[0]
                param[idx] = old
                numeric = (up - down) / (2 * h)
                denom = max(abs(numeric), abs(g[idx]), 1e-8)
                worst = max(worst, abs(numeric - g[idx]) / denom)
    return worst


def check_gradients(n_models: int = 20, seed: int = 0, tol: float = 1e-4) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_models):
            model = random_mlp(rng)
            x = rng.normal(size=(4, model.in_dim))
            if model.layers[-1].activation == "softmax":
                target = one_hot(rng.integers(model.out_dim, size=4), model.out_dim)
                worst = max(worst, gradient_check(model, x, target, fused=True))
            else:
                target = rng.normal(size=(4, model.out_dim))
            worst = max(worst, gradient_check(model, x, target))
        return worst < tol, f"{n_models} random nets, max relative error {worst:.2e} (< {tol:g})"

    return _timed("gradient oracle", run)


# selection rule oracle ---------------------------------------------------------


def _scalar_forward(model: MlpModel, row) -> List[float]:
    """Plain-Python forward pass for one sample."""
    act = [float(v) for v in row]
    for layer in model.layers:
        z = [sum(w * a for w, a in zip(wrow, act)) + b for wrow, b in zip(layer.weights.tolist(), layer.bias)]
        if layer.activation == "relu":
            act = [max(v, 0.0) for v in z]
        elif layer.activation == "sigmoid":
            act = [1.0 / (1.0 + math.exp(-v)) for v in z]
        elif layer.activation == "softmax":
            top = max(z)
            e = [math.exp(v - top) for v in z]
            act = [v / sum(e) for v in e]
        else:
            act = z
    return act


def brute_force_self_paced(model: MlpModel, features, minors, lam: float) -> set:
    chosen = set()
    for i, row in enumerate(features):
        probs = _scalar_forward(model, row)
        label = max(range(len(probs)), key=lambda c: (probs[c], -c))
        if label in minors and -math.log(max(probs[label], 1e-12)) < lam:
            chosen.add((i, label))
    return chosen


def check_selection_rule(n_states: int = 50, pool_size: int = 500, seed: int = 1) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        mismatches = 0
        selected_total = 0
        for _ in range(n_states):
            m = int(rng.integers(3, 7))
            dim = int(rng.integers(2, 6))
            model = init_mlp((dim, 8, m), int(rng.integers(1 << 30)))
            # sharpen the head so predictions span confident and uncertain samples
            model.layers[-1].weights *= rng.uniform(1.0, 6.0)
            minors = set(int(c) for c in rng.choice(m, size=int(rng.integers(1, m)), replace=False))
            lam = float(rng.uniform(0.1, 1.5))
            feats = rng.normal(scale=2.0, size=(pool_size, dim))
            pool = UnlabeledPool(feats, np.zeros(pool_size, dtype=np.int64))
            got = {(d.index, d.assigned_label) for d in self_paced_select(model, pool, minors, lam)}
            want = brute_force_self_paced(model, feats, minors, lam)
            mismatches += len(got ^ want)
            selected_total += len(want)
        return mismatches == 0, (
            f"{n_states} classifier states x {pool_size} samples, {selected_total} selections, "
            f"{mismatches} mismatches"
        )

    return _timed("selection rule oracle", run)


# oversampling ------------------------------------------------------------------


def check_oversampling(n_vectors: int = 100, seed: int = 2) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        failures = []
        for trial in range(n_vectors):
            m = int(rng.integers(2, 9))
            counts = rng.integers(1, 200, size=m)
            labels = rng.permutation(np.repeat(np.arange(m), counts))
            # each row carries its own id so duplicates are traceable
            ds = LabeledDataset(np.arange(labels.size, dtype=np.float64)[:, None], labels, m)
            out = oversample_to_balance(ds, int(rng.integers(1 << 30)))
            ids = out.features[:, 0].astype(np.int64)
            ok = (
                np.all(out.class_counts() == counts.max())
                and np.array_equal(np.sort(np.unique(ids)), np.arange(labels.size))
                and np.array_equal(labels[ids], out.labels)
            )
            if not ok:
                failures.append(trial)
        return not failures, f"{n_vectors} count vectors, failures {failures}"

    return _timed("oversampling exactness", run)


# selector sign property --------------------------------------------------------


def selector_sign_trial(seed: int, lam: float = 0.6, n: int = 200, m: int = 10):
    """Train a fresh selector on losses drawn from {0.1, 1.5}; returns (gap, before, after)."""
    rng = np.random.default_rng(seed)
    losses = rng.choice([0.1, 1.5], size=n)
    probs = rng.dirichlet(np.ones(m), size=n)
    pred = probs.argmax(axis=1)
    cands = CandidateSet(np.zeros(n, dtype=bool), np.arange(n), pred, pred, probs, losses)
    selector = init_selector(m, seed)
    before = selector_objective(selector, cands, lam)
    train_selector(selector, cands, lam, steps=200, lr=0.05, seed=seed)
    after = selector_objective(selector, cands, lam)
    scores = selector_scores(selector, cands)
    gap = float(scores[losses < lam].mean() - scores[losses > lam].mean())
    return gap, before, after


def check_selector_sign(seeds=(0, 1, 2, 3, 4), min_gap: float = 0.3) -> CheckResult:
    def run():
        trials = [selector_sign_trial(s) for s in seeds]
        ok = all(gap >= min_gap and after < before for gap, before, after in trials)
        gaps = ", ".join(f"{g:.3f}" for g, _, _ in trials)
        return ok, f"score gaps [{gaps}] (>= {min_gap}), objective decreased on {sum(a < b for _, b, a in trials)}/{len(trials)} seeds"

    return _timed("selector sign property", run)


# carving arithmetic ------------------------------------------------------------


def check_carving(per_class: int = 5000) -> CheckResult:
    def run():
        m = 10
        labels = np.repeat(np.arange(m), per_class)
        ds = LabeledDataset(np.zeros((labels.size, 1)), labels, m)
        split = carve_imbalance(ds, ImbalanceSpec({0, 2, 6, 7}, 0.01, 0.90, seed=0))
        counts = split.labeled.class_counts()
        minors_ok = all(counts[c] == 50 for c in (0, 2, 6, 7))
        majors_ok = all(counts[c] == 4500 for c in (1, 3, 4, 5, 8, 9))
        ratio = split.imbalance_ratio
        return minors_ok and majors_ok and ratio == 90, f"labeled counts {counts.tolist()}, ratio {ratio:g}"

    return _timed("carving arithmetic", run)


ALL_CHECKS = (check_gradients, check_selection_rule, check_oversampling, check_selector_sign, check_carving)


def run_all() -> List[CheckResult]:
    return [check() for check in ALL_CHECKS]
