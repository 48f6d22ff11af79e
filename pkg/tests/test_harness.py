import json

import numpy as np
import pytest

from selectnet_lab import harness
from selectnet_lab.cli import main
from selectnet_lab.errors import ConfigError, ParseError
from selectnet_lab.harness import (
    ExperimentConfig,
    parse_config,
    prepare_experiment,
    read_metrics_dir,
    run_experiment,
    summarize,
)

TINY = """
# tiny run for tests
num_classes = 4
dim = 4
per_class = 120
minor_classes = 0, 2
minor_keep = 0.05
rounds = 2
round_epochs = 2
init_epochs = 1
selector_steps = 20
seeds = 0
"""


def tiny_config(**kw):
    cfg = parse_config(TINY)
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


def test_parse_config_values_and_overrides():
    cfg = parse_config(
        "lambda = 0.5  # alias\nstrategies = imbalanced, selectnet\nseeds = 3,4\n"
        "reinit_selector = yes\nselectnet.beta = 0.7\nselectnet.rounds = 3\n"
    )
    assert cfg.lam == 0.5 and cfg.seeds == (3, 4) and cfg.reinit_selector is True
    assert cfg.strategies == ("imbalanced", "selectnet")
    sn = cfg.strategy_config("selectnet")
    assert (sn.beta, sn.rounds, sn.lam) == (0.7, 3, 0.5)
    assert cfg.strategy_config("imbalanced").rounds == 20


def test_parse_config_errors():
    with pytest.raises(ParseError, match="line 2"):
        parse_config("seeds = 1\nnonsense\n")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("colour = blue\n")
    with pytest.raises(ConfigError):
        parse_config("rounds = many\n")
    with pytest.raises(ConfigError):
        parse_config("selectnet.hidden = 3\n")


def test_empty_strategy_list_is_config_error():
    with pytest.raises(ConfigError):
        parse_config("strategies =\n").validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(seeds=()).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(strategies=("magic",)).validate()


def test_every_strategy_gets_the_same_split_and_init(monkeypatch):
    seen = []
    real = harness.run_rounds

    def spy(strategy, labeled, pool, minors, classifier, sgd, seed, on_round):
        seen.append((strategy.name, labeled, pool, [p.copy() for p in classifier.parameters()]))
        return real(strategy, labeled, pool, minors, classifier, sgd, seed, on_round)

    monkeypatch.setattr(harness, "run_rounds", spy)
    run_experiment(tiny_config(strategies=("imbalanced", "selectnet")), write=False)
    (_, lab_a, pool_a, init_a), (_, lab_b, pool_b, init_b) = seen
    assert lab_a is lab_b and pool_a is pool_b
    assert all(np.array_equal(a, b) for a, b in zip(init_a, init_b))


def test_test_set_is_disjoint_from_labeled_and_pool():
    exp = prepare_experiment(tiny_config())
    test_rows = {row.tobytes() for row in exp.test.features}
    assert not test_rows & {row.tobytes() for row in exp.split.labeled.features}
    assert not test_rows & {row.tobytes() for row in exp.split.pool.features}
    assert len(set(exp.test.class_counts().tolist())) == 1


def test_outputs_have_every_round_and_rerun_is_byte_identical(tmp_path):
    cfg = tiny_config(out=str(tmp_path / "a"), plots=False)
    records, _ = run_experiment(cfg)
    run_experiment(tiny_config(out=str(tmp_path / "b"), plots=False))
    for rec in records:
        for prefix in ("metrics", "selections", "decisions"):
            name = f"{prefix}_{rec.strategy}_{rec.seed}.csv"
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        lines = (tmp_path / "a" / f"metrics_{rec.strategy}_{rec.seed}.csv").read_text().splitlines()
        assert lines[0].startswith("round,epoch,overall_acc,precision_0,recall_0,f1_0")
        assert [int(l.split(",")[0]) for l in lines[1:]] == [0, 1]
        sel = (tmp_path / "a" / f"selections_{rec.strategy}_{rec.seed}.csv").read_text().splitlines()
        assert sel[0] == "round,labeled_confused,labeled_minor,unlabeled_confused,unlabeled_minor,total_added"
        assert len(sel) == 3
    assert json.loads((tmp_path / "a" / "summary.json").read_text())["aggregate"] == "median"


def test_summarize_examples():
    one = summarize({"imbalanced": [{"overall_acc": 0.5, "recall_0": 0.1, "recall_1": 0.9}]}, [0])
    assert len(one["rows"]) == 1
    assert one["minor_columns"] == ["recall_0", "f1_0"]
    rows = [{"overall_acc": v} for v in (0.5, 0.7, 0.6)]
    table = summarize({"a": rows, "b": [{"overall_acc": 0.65}]})
    assert table["rows"][0]["overall_acc"] == 0.6
    assert table["best"]["overall_acc"] == ["b"]
    assert table["rows"][1]["best_columns"] == ["overall_acc"]


def test_summarize_dir_matches_in_memory_summary(tmp_path):
    _, summary = run_experiment(tiny_config(out=str(tmp_path), plots=False))
    grouped, minors = read_metrics_dir(tmp_path)
    rebuilt = summarize(grouped, minors)
    for a, b in zip(summary["rows"], rebuilt["rows"]):
        assert a["strategy"] == b["strategy"]
        assert a["overall_acc"] == pytest.approx(b["overall_acc"], abs=1e-6)


def test_figures_are_rendered(tmp_path):
    run_experiment(tiny_config(out=str(tmp_path), strategies=("imbalanced", "selectnet")))
    assert (tmp_path / "fig_accuracy.png").stat().st_size > 0
    assert (tmp_path / "fig_class_recall.png").exists()
    assert (tmp_path / "fig_selections_selectnet_0.png").exists()
    assert not (tmp_path / "fig_selections_imbalanced_0.png").exists()


def test_dataset_file_source(tmp_path):
    from selectnet_lab.data import generate_gaussian_blobs, save_dataset

    save_dataset(generate_gaussian_blobs(3, 40, 2, 4.0, 0), tmp_path / "d.csv")
    cfg = tiny_config(dataset=str(tmp_path / "d.csv"), minor_classes=(1,), strategies=("context",))
    records, _ = run_experiment(cfg, write=False)
    assert records[0].final.num_classes == 3


def test_cli_run_summarize_and_exit_codes(tmp_path, capsys):
    cfg_path = tmp_path / "tiny.cfg"
    cfg_path.write_text(TINY)
    out = tmp_path / "out"
    code = main(["run", "--config", str(cfg_path), "--strategy", "imbalanced", "--strategy", "context",
                 "--seed", "1", "--out", str(out), "--no-plots"])
    assert code == 0
    assert sorted(p.name for p in out.glob("metrics_*.csv")) == ["metrics_context_1.csv", "metrics_imbalanced_1.csv"]
    assert main(["summarize", "--in", str(out), "--no-plots"]) == 0
    assert "context" in capsys.readouterr().out

    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 1
    assert main(["run", "--config", str(cfg_path), "--strategy", "nope"]) == 1
    assert main(["summarize", "--in", str(tmp_path / "empty")]) == 1
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--config", str(cfg_path), "--out", str(blocker / "x"), "--no-plots"]) == 2


def test_cli_selfcheck(capsys):
    assert main(["selfcheck"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 5
