"""Command-line front end.

Exit codes: 0 success, 2 configuration problems, 3 data problems
(unreadable CSVs, manifest mismatches, degenerate inputs), 4 run
problems (diverged training, incomplete result sets).
"""

from __future__ import annotations

import argparse
import os
import sys

from .bench import (
    count_failures,
    emit_tables,
    load_config,
    run_benchmark,
    write_results_csv,
)
from .dataio import synth_blobs, write_dataset_csv
from .errors import (
    ConfigError,
    CsvParseError,
    DegenerateDataError,
    DegenerateGeometryError,
    DimensionMismatchError,
    IncompleteResultsError,
    InvalidClusterCountError,
    ManifestMismatchError,
    TrainingDivergedError,
)
from .rng import Rng

_CONFIG_ERRORS = (ConfigError, InvalidClusterCountError)
_DATA_ERRORS = (
    CsvParseError,
    ManifestMismatchError,
    DegenerateDataError,
    DegenerateGeometryError,
    DimensionMismatchError,
    FileNotFoundError,
)
_RUN_ERRORS = (TrainingDivergedError, IncompleteResultsError)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tabclust",
        description="Clustering benchmark runner for labelled tabular CSVs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="start a benchmark run from a JSON config")
    run.add_argument("--config", required=True, help="path to the run config")
    run.add_argument(
        "--max-units",
        type=int,
        default=None,
        help="stop after this many units (the run stays resumable)",
    )

    resume = sub.add_parser("resume", help="continue an interrupted run")
    resume.add_argument("--config", required=True, help="path to the run config")
    resume.add_argument("--max-units", type=int, default=None)

    report = sub.add_parser(
        "report", help="rebuild results.csv and the tables from a ledger"
    )
    report.add_argument(
        "--results", required=True, help="run directory holding ledger.jsonl"
    )

    synth = sub.add_parser(
        "gen-synth", help="write a synthetic blob dataset plus its manifest"
    )
    synth.add_argument("--out", required=True, help="CSV path to write")
    synth.add_argument("--n", type=int, required=True, help="number of rows")
    synth.add_argument("--dim", type=int, required=True, help="feature count")
    synth.add_argument("--k", type=int, required=True, help="cluster count")
    synth.add_argument(
        "--sep", type=float, default=6.0, help="minimum center separation"
    )
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument(
        "--sigma", type=float, default=1.0, help="within-cluster spread"
    )

    validate = sub.add_parser(
        "validate-config", help="check a run config and its manifests"
    )
    validate.add_argument("--config", required=True)
    return parser


def _cmd_run(args, resume: bool) -> int:
    config = load_config(args.config)
    summary = run_benchmark(config, resume=resume, max_units=args.max_units)
    print(
        f"ran {summary['units_run']} unit(s), "
        f"skipped {summary['units_skipped']} already recorded, "
        f"{summary['units_remaining']} remaining"
    )
    print(f"ledger: {summary['ledger']}")
    if summary["complete"]:
        print(f"results: {summary['results']}")
        for label, path in summary["tables"].items():
            print(f"{label}: {path}")
    else:
        print("run incomplete; finish it with: tabclust resume --config "
              + args.config)
    if summary["units_failed"]:
        print(
            f"{summary['units_failed']} unit(s) failed during training; "
            f"see the ledger for details",
            file=sys.stderr,
        )
        return 4
    return 0


def _cmd_report(args) -> int:
    results = write_results_csv(args.results)
    tables = emit_tables(args.results)
    print(f"results: {results}")
    for label, path in tables.items():
        print(f"{label}: {path}")
    failures = count_failures(args.results)
    if failures:
        print(
            f"{failures} unit(s) failed during training; "
            f"see the ledger for details",
            file=sys.stderr,
        )
        return 4
    return 0


def _cmd_gen_synth(args) -> int:
    import dataclasses

    dataset = synth_blobs(
        n=args.n,
        dim=args.dim,
        n_clusters=args.k,
        separation=args.sep,
        sigma=args.sigma,
        rng=Rng(args.seed),
    )
    stem = os.path.splitext(os.path.basename(args.out))[0]
    dataset = dataclasses.replace(dataset, name=stem)
    manifest_path = os.path.splitext(args.out)[0] + ".manifest.json"
    write_dataset_csv(dataset, args.out, manifest_path=manifest_path)
    print(f"dataset: {args.out}")
    print(f"manifest: {manifest_path}")
    return 0


def _cmd_validate_config(args) -> int:
    from .dataio import load_manifest

    config = load_config(args.config)
    for manifest_path in config.datasets:
        load_manifest(manifest_path)
    print(
        f"config ok: {len(config.datasets)} dataset(s), "
        f"{len(config.methods)} method(s), {config.n_folds} folds"
    )
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args, resume=False)
        if args.command == "resume":
            return _cmd_run(args, resume=True)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "gen-synth":
            return _cmd_gen_synth(args)
        if args.command == "validate-config":
            return _cmd_validate_config(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except _RUN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
