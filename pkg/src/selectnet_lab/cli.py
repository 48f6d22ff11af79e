"""Command-line entry point: ``run``, ``summarize`` and ``selfcheck``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .errors import ConfigError, InputError
from .harness import ExperimentConfig, RuntimeFailure, load_config, run_experiment, summarize_dir

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _format_table(summary: dict) -> str:
    minors = set(summary["minor_classes"])
    recall_cols = [c for c in summary["columns"] if c.startswith("recall_")]
    head = ["strategy", "overall_acc", "minor_recall"] + [
        c.split("_")[1] + ("*" if int(c.split("_")[1]) in minors else "") for c in recall_cols
    ]
    lines = ["  ".join(f"{h:>11s}" for h in head)]
    for row in summary["rows"]:
        cells = [row["strategy"], f"{row['overall_acc']:.4f}", f"{row.get('minor_recall_mean', float('nan')):.4f}"]
        cells += [f"{row[c]:.2f}" for c in recall_cols]
        lines.append("  ".join(f"{c:>11s}" for c in cells))
    return "\n".join(lines) + "\n(* minor class; recall columns; median over seeds)"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selectnet-lab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("--config", help="flat key = value config file")
    run.add_argument("--strategy", action="append", dest="strategies", metavar="NAME",
                     help="restrict to this strategy (repeatable)")
    run.add_argument("--seed", action="append", dest="seeds", type=int, metavar="INT",
                     help="restrict to this seed (repeatable)")
    run.add_argument("--out", help="output directory")
    run.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    summ = sub.add_parser("summarize", help="rebuild summary.json from a run directory")
    summ.add_argument("--in", dest="in_dir", required=True)
    summ.add_argument("--no-plots", action="store_true")

    sub.add_parser("selfcheck", help="run the built-in property checks")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            config = load_config(args.config) if args.config else ExperimentConfig()
            if args.strategies:
                config = replace(config, strategies=tuple(args.strategies))
            if args.seeds:
                config = replace(config, seeds=tuple(args.seeds))
            if args.out:
                config = replace(config, out=args.out)
            config.validate()
            _, summary = run_experiment(config, plots=False if args.no_plots else None)
            print(_format_table(summary))
            print(f"outputs written to {config.out}")
        elif args.command == "summarize":
            print(_format_table(summarize_dir(args.in_dir, plots=not args.no_plots)))
        else:
            from .checks import run_all

            results = run_all()
            for r in results:
                print(r.line())
            return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME
    except (ConfigError, InputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeFailure as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - any other failure maps to exit code 2
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
