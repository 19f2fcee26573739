"""Scoring and the weakly supervised five-fold protocol.

Clustering accuracy maximises the matched contingency mass over cluster
to class permutations (Hungarian assignment) and is reported as a
percentage.  The protocol uses labels only to pick the cluster count,
to tune the clustering weight on the training folds, and to score.

Each fold standardizes features on training-fold statistics alone and
applies that transform to the held-out fold.  Every grid candidate is
trained on the four training folds and scored by training-fold accuracy
under the same rule used at test time (k-means on the embedding for the
deep methods, the fitted model's own assignments for the baselines);
the winner takes ties to the earlier grid entry.  Fold spreads are
population standard deviations.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .autoenc import encode
from .cluster import gmm_fit, gmm_predict, kmeans_assign, kmeans_fit
from .dataio import Dataset, standardize
from .embedcluster import (
    METHODS as DEEP_METHODS,
    MethodConfig,
    architecture_for,
    train_embedding,
)
from .errors import (
    ConfigError,
    DegenerateDataError,
    DimensionMismatchError,
    TrainingDivergedError,
)
from .rng import Rng

BASELINE_METHODS = ("kmeans", "gmm")
ALL_METHODS = BASELINE_METHODS + DEEP_METHODS
# flat baselines run on the standardized features directly
_METHOD_ALIASES = {"kmeans-raw": "kmeans", "gmm-raw": "gmm"}
DEFAULT_GAMMA_GRID = (0.01, 0.1, 1.0)


def canonical_method(method: str) -> str:
    method = _METHOD_ALIASES.get(method, method)
    if method not in ALL_METHODS:
        raise ConfigError(
            f"unknown method {method!r}; expected one of {ALL_METHODS}"
        )
    return method


# ---------------------------------------------------------------------------
# accuracy
# ---------------------------------------------------------------------------

def contingency(
    y_true: np.ndarray, y_pred: np.ndarray, n_clusters: int | None = None
) -> np.ndarray:
    """Square count matrix: entry (a, b) counts rows with predicted
    label a and true label b (labels must be dense non-negative ints)."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.shape[0] == 0:
        raise DegenerateDataError(
            f"label vectors must be equal-length and non-empty, "
            f"got {y_true.shape} and {y_pred.shape}"
        )
    if y_true.min() < 0 or y_pred.min() < 0:
        raise DegenerateDataError("labels must be non-negative")
    observed = int(max(y_true.max(), y_pred.max())) + 1
    if n_clusters is None:
        n_clusters = observed
    elif observed > n_clusters:
        raise DegenerateDataError(
            f"labels reach {observed - 1} but the table is {n_clusters} wide"
        )
    flat = np.bincount(
        y_pred * n_clusters + y_true, minlength=n_clusters * n_clusters
    )
    return flat.reshape(n_clusters, n_clusters)


def hungarian_match(cost: np.ndarray, maximize: bool = False) -> np.ndarray:
    """Optimal row-to-column assignment of a square cost matrix;
    returns the matched column for each row."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise DimensionMismatchError(f"cost matrix must be square, got {cost.shape}")
    rows, cols = linear_sum_assignment(cost, maximize=maximize)
    out = np.empty(cost.shape[0], dtype=np.int64)
    out[rows] = cols
    return out


def cluster_accuracy(
    y_true: np.ndarray, y_pred: np.ndarray, n_clusters: int | None = None
) -> float:
    """Percentage of rows explained by the best cluster-to-class match."""
    table = contingency(y_true, y_pred, n_clusters)
    match = hungarian_match(table, maximize=True)
    matched = table[np.arange(table.shape[0]), match].sum()
    return float(matched) / np.asarray(y_true).shape[0] * 100.0


# ---------------------------------------------------------------------------
# folds
# ---------------------------------------------------------------------------

@dataclass
class FoldPlan:
    n: int
    folds: list[np.ndarray]  # disjoint test index sets covering range(n)

    @property
    def n_folds(self) -> int:
        return len(self.folds)

    def test_indices(self, fold: int) -> np.ndarray:
        return self.folds[fold]

    def train_indices(self, fold: int) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.folds[fold]] = False
        return np.flatnonzero(mask)


def make_folds(
    n: int,
    rng: Rng,
    n_folds: int = 5,
    stratify_labels: np.ndarray | None = None,
) -> FoldPlan:
    """Shuffle indices into ``n_folds`` test sets.

    Unstratified folds are contiguous chunks of one permutation; the
    first ``n % n_folds`` folds hold one extra row.  With labels given,
    per-class permutations are dealt round robin, which keeps the same
    fold sizes while balancing classes.
    """
    if n_folds < 2:
        raise ConfigError("n_folds must be >= 2")
    if n < n_folds:
        raise DegenerateDataError(f"cannot split {n} rows into {n_folds} folds")
    if stratify_labels is None:
        perm = rng.permutation(n)
        base, extra = divmod(n, n_folds)
        folds = []
        start = 0
        for f in range(n_folds):
            size = base + (1 if f < extra else 0)
            folds.append(np.sort(perm[start : start + size]))
            start += size
        return FoldPlan(n, folds)
    labels = np.asarray(stratify_labels)
    if labels.shape != (n,):
        raise DimensionMismatchError(
            f"stratify labels shape {labels.shape} != ({n},)"
        )
    dealt: list[list[int]] = [[] for _ in range(n_folds)]
    position = 0
    for value in np.unique(labels):
        members = np.flatnonzero(labels == value)
        members = members[rng.spawn("stratum", int(value)).permutation(len(members))]
        for idx in members:
            dealt[position % n_folds].append(int(idx))
            position += 1
    return FoldPlan(n, [np.sort(np.array(f, dtype=np.int64)) for f in dealt])


# ---------------------------------------------------------------------------
# per-candidate evaluation
# ---------------------------------------------------------------------------

@dataclass
class CandidateOutcome:
    """One (method, fold, grid candidate) evaluation.

    Both scores come from models that never saw the held-out fold; the
    test accuracy is only read out for the candidate that wins on
    ``train_score``, so recording it here keeps the unit stateless.
    """

    method: str
    fold: int
    candidate_index: int
    gamma: float | None
    seed: int
    train_score: float
    test_accuracy: float
    conv_fallback: bool = False


def hyper_grid_for(
    method: str,
    base: MethodConfig | None = None,
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMA_GRID,
) -> list[MethodConfig | None]:
    """Candidate list for one method, in selection-priority order.

    dec ignores the clustering weight, so it gets a single candidate;
    the other deep methods get one candidate per grid value.  Baselines
    have nothing to tune and get a single None slot.
    """
    method = canonical_method(method)
    if method in BASELINE_METHODS:
        return [None]
    if base is None:
        base = MethodConfig(method=method)
    else:
        base = dataclasses.replace(base, method=method)
    if method == "dec":
        return [base]
    return [dataclasses.replace(base, gamma=g) for g in gamma_grid]


def _normalize_grid(method, hyper_grid, base) -> list[MethodConfig | None]:
    if method in BASELINE_METHODS:
        return [None]
    if hyper_grid is None:
        return hyper_grid_for(method, base)
    grid: list[MethodConfig] = []
    for entry in hyper_grid:
        if isinstance(entry, MethodConfig):
            grid.append(dataclasses.replace(entry, method=method))
        else:
            cand = base if base is not None else MethodConfig(method=method)
            grid.append(
                dataclasses.replace(cand, method=method, gamma=float(entry))
            )
    if not grid:
        raise ConfigError(f"empty hyperparameter grid for method {method!r}")
    if method == "dec" and all(not isinstance(e, MethodConfig) for e in hyper_grid):
        # dec ignores gamma, so a plain weight grid collapses to one slot
        grid = grid[:1]
    return grid


def evaluate_candidate(
    x: np.ndarray,
    y: np.ndarray,
    n_clusters: int,
    method: str,
    plan: FoldPlan,
    fold: int,
    config: MethodConfig | None,
    seed: int,
) -> tuple[float, float, bool]:
    """Train one candidate on the training folds of ``fold``.

    Standardizes on training-fold statistics, fits, and returns
    (train_score, test_accuracy, conv_fallback).  All randomness derives
    from ``seed`` alone, so units can run in any order or process.
    """
    method = canonical_method(method)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if not 0 <= fold < plan.n_folds:
        raise ConfigError(f"fold {fold} outside [0, {plan.n_folds})")
    train_idx = plan.train_indices(fold)
    test_idx = plan.test_indices(fold)
    x_train, scaler = standardize(x[train_idx])
    x_test = scaler.transform(x[test_idx])
    y_train, y_test = y[train_idx], y[test_idx]
    root = Rng(seed)

    if method == "kmeans":
        model = kmeans_fit(x_train, n_clusters, root.spawn("fit"))
        train_score = cluster_accuracy(y_train, model.assignments, n_clusters)
        test_labels = kmeans_assign(model, x_test)
        return train_score, cluster_accuracy(y_test, test_labels, n_clusters), False
    if method == "gmm":
        model = gmm_fit(x_train, n_clusters, root.spawn("fit"))
        train_score = cluster_accuracy(
            y_train, model.responsibilities.argmax(axis=1), n_clusters
        )
        test_labels = gmm_predict(model, x_test)
        return train_score, cluster_accuracy(y_test, test_labels, n_clusters), False

    if config is None:
        raise ConfigError(f"method {method!r} needs a MethodConfig candidate")
    config = dataclasses.replace(config, method=method)
    spec = architecture_for(method, x.shape[1], n_clusters, config)
    model = train_embedding(spec, x_train, n_clusters, config, root.spawn("train"))
    km_train = kmeans_fit(
        encode(model.autoencoder, x_train), n_clusters, root.spawn("train-kmeans")
    )
    train_score = cluster_accuracy(y_train, km_train.assignments, n_clusters)
    km_test = kmeans_fit(
        encode(model.autoencoder, x_test), n_clusters, root.spawn("test-kmeans")
    )
    test_accuracy = cluster_accuracy(y_test, km_test.assignments, n_clusters)
    return train_score, test_accuracy, model.conv_fallback


def select_candidate(outcomes: list[CandidateOutcome]) -> CandidateOutcome | None:
    """Winner by training-fold score; ties to the earlier grid entry.
    Failed candidates arrive as NaN scores and never win."""
    best = None
    for outcome in outcomes:
        if math.isnan(outcome.train_score):
            continue
        key = (-outcome.train_score, outcome.candidate_index)
        if best is None or key < best[0]:
            best = (key, outcome)
    return None if best is None else best[1]


# ---------------------------------------------------------------------------
# protocol
# ---------------------------------------------------------------------------

@dataclass
class EvalResult:
    method: str
    dataset: str
    fold_accuracies: list[float]  # NaN marks a fold whose candidates all failed
    mean: float
    std: float  # population
    chosen_hyperparams: list[MethodConfig | None]
    failures: list[str] = field(default_factory=list)


def _aggregate(accs: list[float]) -> tuple[float, float]:
    kept = [a for a in accs if not math.isnan(a)]
    if not kept:
        return float("nan"), float("nan")
    return float(np.mean(kept)), float(np.std(kept))


def run_protocol(
    method: str,
    dataset: Dataset,
    hyper_grid=None,
    rng: Rng | None = None,
    plan: FoldPlan | None = None,
    base_config: MethodConfig | None = None,
) -> EvalResult:
    """Five-fold tune-and-evaluate for one method on one dataset.

    ``hyper_grid`` may be omitted (default gamma grid), a sequence of
    clustering weights, or explicit MethodConfig candidates.  A fold
    whose training run diverges is recorded as a failure and contributes
    no accuracy; the aggregate is taken over the folds that finished.
    """
    method = canonical_method(method)
    rng = Rng(0) if rng is None else rng
    x = np.asarray(dataset.features, dtype=np.float64)
    y = np.asarray(dataset.labels)
    n_clusters = dataset.n_classes
    if plan is None:
        plan = make_folds(x.shape[0], rng.spawn("folds"))
    grid = _normalize_grid(method, hyper_grid, base_config)

    fold_accuracies: list[float] = []
    chosen: list[MethodConfig | None] = []
    failures: list[str] = []
    for fold in range(plan.n_folds):
        outcomes: list[CandidateOutcome] = []
        for i, cand in enumerate(grid):
            seed = rng.derive_seed("unit", fold, i)
            try:
                score, accuracy, fallback = evaluate_candidate(
                    x, y, n_clusters, method, plan, fold, cand, seed
                )
            except TrainingDivergedError as err:
                failures.append(f"fold {fold} candidate {i}: {err}")
                score, accuracy, fallback = float("nan"), float("nan"), False
            outcomes.append(
                CandidateOutcome(
                    method=method,
                    fold=fold,
                    candidate_index=i,
                    gamma=None if cand is None else cand.gamma,
                    seed=seed,
                    train_score=score,
                    test_accuracy=accuracy,
                    conv_fallback=fallback,
                )
            )
        winner = select_candidate(outcomes)
        if winner is None:
            fold_accuracies.append(float("nan"))
            chosen.append(None)
        else:
            fold_accuracies.append(winner.test_accuracy)
            chosen.append(grid[winner.candidate_index])

    mean, std = _aggregate(fold_accuracies)
    return EvalResult(
        method=method,
        dataset=dataset.name,
        fold_accuracies=fold_accuracies,
        mean=mean,
        std=std,
        chosen_hyperparams=chosen,
        failures=failures,
    )


# ---------------------------------------------------------------------------
# ranking
# ---------------------------------------------------------------------------

@dataclass
class RankTable:
    methods: list[str]             # registration order
    datasets: list[str]
    per_dataset_ranks: np.ndarray  # [n_datasets, n_methods], 1 = best accuracy
    average_rank: np.ndarray       # [n_methods] mean rank over datasets
    rank_std: np.ndarray           # [n_methods] population std of ranks
    overall_rank: np.ndarray       # [n_methods] rank of the averages, 1 = best


def rank_methods(
    matrix: np.ndarray,
    methods: list[str] | None = None,
    datasets: list[str] | None = None,
) -> RankTable:
    """Per-dataset ranks (1 = highest accuracy) and their aggregate.

    ``matrix`` is [n_datasets, n_methods] mean accuracies.  Ties on
    accuracy and on average rank go to the earlier-registered method,
    which makes the table independent of float noise ordering.
    """
    acc = np.asarray(matrix, dtype=np.float64)
    if acc.ndim != 2 or acc.shape[0] == 0 or acc.shape[1] == 0:
        raise DegenerateDataError(
            f"need a non-empty 2-D accuracy table, got shape {acc.shape}"
        )
    if methods is None:
        methods = [f"method-{j}" for j in range(acc.shape[1])]
    if datasets is None:
        datasets = [f"dataset-{i}" for i in range(acc.shape[0])]
    if acc.shape != (len(datasets), len(methods)):
        raise DimensionMismatchError(
            f"accuracy table shape {acc.shape} != "
            f"({len(datasets)}, {len(methods)})"
        )
    ranks = np.empty_like(acc, dtype=np.int64)
    for row in range(acc.shape[0]):
        order = np.argsort(-acc[row], kind="stable")
        ranks[row, order] = np.arange(1, len(methods) + 1)
    average = ranks.mean(axis=0)
    spread = ranks.std(axis=0)
    overall = np.empty(len(methods), dtype=np.int64)
    order = np.argsort(average, kind="stable")
    overall[order] = np.arange(1, len(methods) + 1)
    return RankTable(list(methods), list(datasets), ranks, average, spread, overall)
