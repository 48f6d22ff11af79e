import time

import numpy as np
import pytest

from selectnet_lab.harness import ExperimentConfig, run_experiment
from selectnet_lab.nn import DenseLayer, MlpModel

ACCEPTANCE_LINES = []


def record_criterion(label, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def probe_classifier(m):
    """Softmax over the raw input: feeding ``log p`` rows yields the probabilities ``p``."""
    return MlpModel([DenseLayer(np.eye(m), np.zeros(m), "softmax")])


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """The default 10-class experiment (5 strategies x 5 seeds), run once per session."""
    out = tmp_path_factory.mktemp("desk")
    config = ExperimentConfig(out=str(out))
    start = time.perf_counter()
    records, summary = run_experiment(config)
    return {
        "config": config,
        "records": records,
        "summary": summary,
        "out": out,
        "seconds": time.perf_counter() - start,
    }
