"""Benchmark orchestration: config, unit ledger, result tables.

A run is a grid of units (dataset x method x fold x grid candidate).
Every unit's randomness derives from the run seed and the unit's grid
position, so units can execute serially, in any order, or across
processes and still produce identical numbers.  Finished units append
to a JSONL ledger (first line: run metadata) which makes interrupted
runs resumable and is the single source for results.csv and the
emitted tables.  A training run that diverges is recorded as a failed
unit rather than aborting the sweep; reports skip folds that have no
surviving candidate.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from . import _kernels
from .dataio import load_csv, load_manifest
from .embedcluster import MethodConfig
from .errors import (
    ConfigError,
    IncompleteResultsError,
    ManifestMismatchError,
)
from .evaluate import (
    ALL_METHODS,
    DEEP_METHODS,
    DEFAULT_GAMMA_GRID,
    FoldPlan,
    canonical_method,
    evaluate_candidate,
    hyper_grid_for,
    make_folds,
)
from .errors import TrainingDivergedError
from .rng import Rng

# recognised names we deliberately do not run: their objectives are not
# specified fully enough in their source publications to reimplement
UNSUPPORTED_METHODS = ("ae_cm", "dynae")

LEDGER_NAME = "ledger.jsonl"
RESULTS_NAME = "results.csv"

# MethodConfig fields a config file may override globally
_OVERRIDE_FIELDS = (
    "pretrain_epochs",
    "lr",
    "batch_size",
    "p_update_interval",
    "dkm_inv_temperature",
    "dkm_anneal",
    "hidden_widths",
    "embed_dim",
    "conv_channels",
    "conv_width",
    "conv_stride",
)


@dataclass
class BenchmarkConfig:
    datasets: list[str]               # manifest paths, registration order
    methods: list[str]                # registration order
    output_dir: str
    epochs: int = 1000
    seed: int = 0
    n_folds: int = 5
    stratify: bool = False
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMA_GRID
    parallelism: int = 1
    method_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.datasets:
            raise ConfigError("config lists no datasets")
        if not self.methods:
            raise ConfigError("config lists no methods")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("duplicate method in config")
        for method in self.methods:
            if method in UNSUPPORTED_METHODS:
                raise ConfigError(
                    f"method {method!r} is recognised but not supported: its "
                    f"objective is unspecified in its source publication, so "
                    f"this suite does not run it; remove it from the method "
                    f"list"
                )
            if method not in ALL_METHODS:
                raise ConfigError(
                    f"unknown method {method!r}; expected one of {ALL_METHODS}"
                )
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.n_folds < 2:
            raise ConfigError("n_folds must be >= 2")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        self.gamma_grid = tuple(float(g) for g in self.gamma_grid)
        if not self.gamma_grid and any(m in DEEP_METHODS for m in self.methods):
            raise ConfigError("gamma_grid must not be empty for deep methods")
        unknown = set(self.method_overrides) - set(_OVERRIDE_FIELDS)
        if unknown:
            raise ConfigError(
                f"unknown method_overrides {sorted(unknown)}; "
                f"allowed: {sorted(_OVERRIDE_FIELDS)}"
            )

    def base_method_config(self) -> MethodConfig:
        overrides = dict(self.method_overrides)
        for key in ("hidden_widths", "conv_channels"):
            if overrides.get(key) is not None:
                overrides[key] = tuple(overrides[key])
        return MethodConfig(method="idec", epochs=self.epochs, **overrides)


def load_config(path) -> BenchmarkConfig:
    """Read a run configuration from JSON."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    known = {f.name for f in dataclasses.fields(BenchmarkConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    missing = {"datasets", "methods", "output_dir"} - set(doc)
    if missing:
        raise ConfigError(f"config missing required keys {sorted(missing)}")
    if "gamma_grid" in doc:
        doc["gamma_grid"] = tuple(doc["gamma_grid"])
    return BenchmarkConfig(**doc)


def config_digest(config: BenchmarkConfig) -> str:
    """Stable fingerprint of everything that affects the numbers."""
    doc = dataclasses.asdict(config)
    doc.pop("output_dir")      # relocating the output does not change results
    doc.pop("parallelism")     # execution layout does not change results
    blob = json.dumps(doc, sort_keys=True, default=list)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def round_half_up(value: float, decimals: int = 1) -> str:
    """Fixed-point display rounding where .5 always rounds away from zero
    (so 4.25 shows as 4.3, unlike the default banker's rounding)."""
    value = float(value)
    if not math.isfinite(value):
        return "nan"
    exp = Decimal(1).scaleb(-decimals)
    return str(Decimal(str(value)).quantize(exp, rounding=ROUND_HALF_UP))


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

def _grid_for(config: BenchmarkConfig) -> dict[str, list[float | None]]:
    """Per-method candidate gammas (None marks an untunable slot)."""
    base = config.base_method_config()
    grid = {}
    for method in config.methods:
        candidates = hyper_grid_for(method, base, config.gamma_grid)
        grid[method] = [None if c is None else c.gamma for c in candidates]
    return grid


def _unit_payloads(config, datasets, plans, done):
    """Pending units in grid order with their derived seeds."""
    root = Rng(config.seed)
    base = config.base_method_config()
    payloads = []
    for d_idx, data in enumerate(datasets):
        for m_idx, method in enumerate(config.methods):
            candidates = hyper_grid_for(method, base, config.gamma_grid)
            for fold in range(config.n_folds):
                for c_idx, candidate in enumerate(candidates):
                    if (data["name"], method, fold, c_idx) in done:
                        continue
                    payloads.append(
                        {
                            "dataset": data["name"],
                            "x": data["x"],
                            "y": data["y"],
                            "k": data["k"],
                            "method": method,
                            "folds": plans[d_idx].folds,
                            "n": plans[d_idx].n,
                            "fold": fold,
                            "candidate": c_idx,
                            "config": candidate,
                            "seed": root.derive_seed(
                                "unit", d_idx, m_idx, fold, c_idx
                            ),
                        }
                    )
    return payloads


def _run_unit(payload: dict) -> dict:
    plan = FoldPlan(payload["n"], list(payload["folds"]))
    record = {
        "type": "unit",
        "dataset": payload["dataset"],
        "method": payload["method"],
        "fold": payload["fold"],
        "candidate": payload["candidate"],
        "gamma": None if payload["config"] is None else payload["config"].gamma,
        "seed": payload["seed"],
    }
    try:
        train_score, test_accuracy, fallback = evaluate_candidate(
            payload["x"],
            payload["y"],
            payload["k"],
            payload["method"],
            plan,
            payload["fold"],
            payload["config"],
            payload["seed"],
        )
    except TrainingDivergedError as err:
        record.update(
            status="failed",
            error=str(err),
            train_score=float("nan"),
            test_accuracy=float("nan"),
            conv_fallback=False,
        )
        return record
    record.update(
        status="done",
        train_score=train_score,
        test_accuracy=test_accuracy,
        conv_fallback=fallback,
    )
    return record


def _read_ledger(path):
    """(meta, unit records); tolerates a truncated final line."""
    meta = None
    units = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError:
                break  # interrupted write at the tail; everything before is good
            if doc.get("type") == "meta":
                meta = doc
            elif doc.get("type") == "unit":
                units.append(doc)
    if meta is None:
        raise ManifestMismatchError(f"ledger {path} has no metadata line")
    return meta, units


def run_benchmark(
    config: BenchmarkConfig, resume: bool = False, max_units: int | None = None
) -> dict:
    """Execute pending units and append them to the ledger.

    With ``resume`` the existing ledger must carry the same config
    digest; recorded units (finished or failed) are skipped.
    ``max_units`` caps how many pending units run, keeping the run
    resumable.  Returns a summary with unit counts and, once the grid
    is complete, writes results.csv and the accuracy/rank tables.
    """
    os.makedirs(config.output_dir, exist_ok=True)
    ledger_path = os.path.join(config.output_dir, LEDGER_NAME)
    digest = config_digest(config)

    done = {}
    if os.path.exists(ledger_path):
        if not resume:
            raise ConfigError(
                f"{ledger_path} already exists; resume the run or pick a "
                f"fresh output directory"
            )
        meta, units = _read_ledger(ledger_path)
        if meta["digest"] != digest:
            raise ManifestMismatchError(
                "existing ledger was produced by a different configuration "
                f"(digest {meta['digest']} != {digest})"
            )
        for unit in units:
            key = (unit["dataset"], unit["method"], unit["fold"], unit["candidate"])
            done[key] = unit
    else:
        meta = {
            "type": "meta",
            "digest": digest,
            "backend": _kernels.backend(),
            "seed": config.seed,
            "methods": list(config.methods),
            "n_folds": config.n_folds,
            "grid": _grid_for(config),
            "datasets": [],
        }

    datasets = []
    root = Rng(config.seed)
    for manifest_path in config.datasets:
        manifest = load_manifest(manifest_path)
        ds = load_csv(manifest, base_dir=os.path.dirname(manifest_path) or ".")
        datasets.append(
            {"name": ds.name, "x": ds.features, "y": ds.labels, "k": ds.n_classes}
        )
    names = [d["name"] for d in datasets]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate dataset names {names}")

    if not os.path.exists(ledger_path):
        meta["datasets"] = names
        with open(ledger_path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(meta) + "\n")
    elif meta.get("datasets") != names:
        raise ManifestMismatchError(
            f"ledger datasets {meta.get('datasets')} != configured {names}"
        )

    plans = [
        make_folds(
            d["x"].shape[0],
            root.spawn("folds", i),
            config.n_folds,
            d["y"] if config.stratify else None,
        )
        for i, d in enumerate(datasets)
    ]

    pending = _unit_payloads(config, datasets, plans, done)
    capped = pending if max_units is None else pending[:max_units]
    workers = int(os.environ.get("BENCH_THREADS", config.parallelism))

    failed = sum(1 for u in done.values() if u.get("status") == "failed")
    with open(ledger_path, "a", encoding="utf-8") as fh:
        if workers > 1 and len(capped) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for record in pool.map(_run_unit, capped):
                    fh.write(json.dumps(record) + "\n")
                    fh.flush()
                    failed += record["status"] == "failed"
        else:
            for payload in capped:
                record = _run_unit(payload)
                fh.write(json.dumps(record) + "\n")
                fh.flush()
                failed += record["status"] == "failed"

    remaining = len(pending) - len(capped)
    summary = {
        "ledger": ledger_path,
        "units_run": len(capped),
        "units_skipped": len(done),
        "units_remaining": remaining,
        "units_failed": failed,
        "complete": remaining == 0,
    }
    if summary["complete"]:
        summary["results"] = write_results_csv(config.output_dir)
        summary["tables"] = emit_tables(config.output_dir)
    return summary


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

def _collect(output_dir):
    """Ledger contents keyed for table emission; raises if any unit of
    the configured grid has no record at all."""
    meta, units = _read_ledger(os.path.join(output_dir, LEDGER_NAME))
    by_key = {
        (u["dataset"], u["method"], u["fold"], u["candidate"]): u for u in units
    }
    missing = [
        (ds, m, f, c)
        for ds in meta["datasets"]
        for m in meta["methods"]
        for f in range(meta["n_folds"])
        for c in range(len(meta["grid"][m]))
        if (ds, m, f, c) not in by_key
    ]
    if missing:
        head = ", ".join(f"{ds}/{m}/fold{f}/cand{c}" for ds, m, f, c in missing[:5])
        raise IncompleteResultsError(
            f"{len(missing)} unit(s) missing from the ledger ({head}"
            f"{', ...' if len(missing) > 5 else ''}); resume the run first"
        )
    return meta, by_key


def _select_fold(meta, by_key, dataset, method, fold):
    """Winning candidate record for one fold (best train score, ties to
    the earlier grid entry) or None when every candidate failed."""
    best = None
    for c in range(len(meta["grid"][method])):
        record = by_key[(dataset, method, fold, c)]
        if record["status"] != "done" or math.isnan(record["train_score"]):
            continue
        key = (-record["train_score"], c)
        if best is None or key < best[0]:
            best = (key, record)
    return None if best is None else best[1]


def count_failures(output_dir) -> int:
    meta, units = _read_ledger(os.path.join(output_dir, LEDGER_NAME))
    return sum(1 for u in units if u.get("status") == "failed")


def write_results_csv(output_dir) -> str:
    """Per-fold table in grid order, one row per selected candidate."""
    import csv as _csv

    meta, by_key = _collect(output_dir)
    path = os.path.join(output_dir, RESULTS_NAME)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(
            ["dataset", "method", "fold", "accuracy", "chosen_gamma", "seed"]
        )
        for ds in meta["datasets"]:
            for method in meta["methods"]:
                for fold in range(meta["n_folds"]):
                    chosen = _select_fold(meta, by_key, ds, method, fold)
                    if chosen is None:
                        writer.writerow([ds, method, fold, "nan", "", ""])
                        continue
                    gamma = chosen["gamma"]
                    writer.writerow(
                        [
                            ds,
                            method,
                            fold,
                            repr(float(chosen["test_accuracy"])),
                            "" if gamma is None else repr(float(gamma)),
                            chosen["seed"],
                        ]
                    )
    return path


def _write_markdown(path, header, rows):
    widths = [
        max(len(str(cell)) for cell in col) for col in zip(header, *rows)
    ]
    def fmt(cells):
        return "| " + " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + " |"
    lines = [fmt(header), "| " + " | ".join("-" * w for w in widths) + " |"]
    lines.extend(fmt(r) for r in rows)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_tables(output_dir) -> dict:
    """Accuracy and rank tables (CSV plus aligned markdown).

    Accuracy cells are "mean (std)" over finished folds with half-up
    rounding to one decimal; ranks come from the unrounded fold means,
    ties going to the earlier-registered method.
    """
    import csv as _csv

    from .evaluate import rank_methods

    meta, by_key = _collect(output_dir)
    datasets, methods, n_folds = meta["datasets"], meta["methods"], meta["n_folds"]
    means = np.empty((len(datasets), len(methods)))
    stds = np.empty_like(means)
    for i, ds in enumerate(datasets):
        for j, method in enumerate(methods):
            accs = []
            for f in range(n_folds):
                chosen = _select_fold(meta, by_key, ds, method, f)
                if chosen is not None:
                    accs.append(chosen["test_accuracy"])
            if accs:
                means[i, j] = float(np.mean(accs))
                stds[i, j] = float(np.std(accs))
            else:
                means[i, j] = float("nan")
                stds[i, j] = float("nan")

    acc_csv = os.path.join(output_dir, "accuracy_table.csv")
    with open(acc_csv, "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["dataset"] + methods)
        for i, ds in enumerate(datasets):
            writer.writerow(
                [ds]
                + [
                    f"{round_half_up(means[i, j])} ({round_half_up(stds[i, j])})"
                    for j in range(len(methods))
                ]
            )

    table = rank_methods(means, methods, datasets)
    rank_csv = os.path.join(output_dir, "rank_table.csv")
    with open(rank_csv, "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["dataset"] + methods)
        for i, ds in enumerate(datasets):
            writer.writerow([ds] + [int(r) for r in table.per_dataset_ranks[i]])
        writer.writerow(
            ["average"]
            + [
                f"{round_half_up(table.average_rank[j])} "
                f"({round_half_up(table.rank_std[j])})"
                for j in range(len(methods))
            ]
        )
        writer.writerow(["overall"] + [int(r) for r in table.overall_rank])

    acc_rows = [
        [ds]
        + [
            f"{round_half_up(means[i, j])} ({round_half_up(stds[i, j])})"
            for j in range(len(methods))
        ]
        for i, ds in enumerate(datasets)
    ]
    acc_md = os.path.join(output_dir, "accuracy_table.md")
    _write_markdown(acc_md, ["dataset"] + methods, acc_rows)

    rank_rows = [
        [ds] + [int(r) for r in table.per_dataset_ranks[i]]
        for i, ds in enumerate(datasets)
    ]
    rank_rows.append(
        ["average"]
        + [
            f"{round_half_up(table.average_rank[j])} "
            f"({round_half_up(table.rank_std[j])})"
            for j in range(len(methods))
        ]
    )
    rank_rows.append(["overall"] + [int(r) for r in table.overall_rank])
    rank_md = os.path.join(output_dir, "rank_table.md")
    _write_markdown(rank_md, ["dataset"] + methods, rank_rows)

    return {
        "accuracy_csv": acc_csv,
        "rank_csv": rank_csv,
        "accuracy_md": acc_md,
        "rank_md": rank_md,
    }
