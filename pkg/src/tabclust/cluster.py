"""Flat clustering baselines: k-means and a diagonal-covariance GMM.

Both fitters are deterministic given an Rng, use k-means++ style seeding
(the GMM is initialised from a k-means fit), and record their objective
trajectory so tests can assert monotonicity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._kernels import gaussian_diag_logpdf, pairwise_sqdist
from .errors import DegenerateDataError, InvalidClusterCountError
from .rng import Rng


def _validate(x: np.ndarray, k: int) -> np.ndarray:
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
        raise DegenerateDataError(f"expected a non-empty 2-D matrix, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DegenerateDataError("data contains non-finite values")
    if k < 1 or k > x.shape[0]:
        raise InvalidClusterCountError(
            f"cluster count {k} outside [1, {x.shape[0]}]"
        )
    return x


def _choice(rng: Rng, weights: np.ndarray) -> int:
    """Sample an index proportionally to non-negative weights."""
    total = weights.sum()
    if total <= 0.0 or not np.isfinite(total):
        # all remaining mass is zero (duplicated points); fall back to uniform
        return int(rng.integers(weights.shape[0]))
    cum = np.cumsum(weights)
    u = rng.random() * total
    return int(min(np.searchsorted(cum, u, side="right"), weights.shape[0] - 1))


def _plus_plus_seed(x: np.ndarray, k: int, rng: Rng) -> np.ndarray:
    """k-means++ initial centroids: first uniform, then D^2 weighted."""
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[int(rng.integers(n))]
    if k == 1:
        return centroids
    closest = pairwise_sqdist(x, centroids[0:1])[:, 0]
    for j in range(1, k):
        centroids[j] = x[_choice(rng, closest)]
        closest = np.minimum(closest, pairwise_sqdist(x, centroids[j : j + 1])[:, 0])
    return centroids


@dataclass
class KMeansModel:
    centroids: np.ndarray     # [k, d]
    assignments: np.ndarray   # [n] int
    inertia: float
    inertia_path: list[float]


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int):
    n, k = x.shape[0], centroids.shape[0]
    centroids = centroids.copy()
    assignments = np.full(n, -1, dtype=np.int64)
    path: list[float] = []
    for _ in range(max_iter):
        dist = pairwise_sqdist(x, centroids)
        new_assign = dist.argmin(axis=1)
        # relocate empty clusters to the point farthest from its centroid
        for j in range(k):
            if not np.any(new_assign == j):
                current = dist[np.arange(n), new_assign]
                donor = int(current.argmax())
                centroids[j] = x[donor]
                new_assign[donor] = j
                dist[:, j] = pairwise_sqdist(x, centroids[j : j + 1])[:, 0]
        path.append(float(dist[np.arange(n), new_assign].sum()))
        if np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
        for j in range(k):
            members = x[assignments == j]
            if members.shape[0]:
                centroids[j] = members.mean(axis=0)
    # final sync so the reported triple is self-consistent
    dist = pairwise_sqdist(x, centroids)
    assignments = dist.argmin(axis=1)
    inertia = float(dist[np.arange(n), assignments].sum())
    path.append(inertia)
    return centroids, assignments, inertia, path


def kmeans_fit(
    x: np.ndarray,
    k: int,
    rng: Rng,
    max_iter: int = 300,
    n_restarts: int = 10,
) -> KMeansModel:
    """Lloyd's algorithm with k-means++ seeding over independent restarts.

    The winner is the restart with the smallest inertia; ties go to the
    earlier restart index so results do not depend on scan order.
    """
    x = _validate(x, k)
    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")
    best: KMeansModel | None = None
    best_key = None
    for r in range(n_restarts):
        seeds = _plus_plus_seed(x, k, rng.spawn("kmeans-restart", r))
        centroids, assignments, inertia, path = _lloyd(x, seeds, max_iter)
        key = (inertia, r)
        if best_key is None or key < best_key:
            best_key = key
            best = KMeansModel(centroids, assignments, inertia, path)
    return best


def kmeans_assign(model: KMeansModel, x: np.ndarray) -> np.ndarray:
    """Nearest-centroid labels for new rows."""
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if x.ndim != 2 or x.shape[1] != model.centroids.shape[1]:
        raise DegenerateDataError(
            f"expected [n, {model.centroids.shape[1]}] matrix, got {x.shape}"
        )
    return pairwise_sqdist(x, model.centroids).argmin(axis=1)


@dataclass
class GmmModel:
    weights: np.ndarray           # [k]
    means: np.ndarray             # [k, d]
    variances: np.ndarray         # [k, d]
    responsibilities: np.ndarray  # [n, k]
    log_likelihood: float
    ll_path: list[float]


def _log_joint(x, weights, means, variances):
    return gaussian_diag_logpdf(x, means, variances) + np.log(weights)[None, :]


def _gmm_em(x, k, rng, max_iter, tol, var_floor) -> GmmModel:
    km = kmeans_fit(x, k, rng, n_restarts=1)
    n, d = x.shape
    means = km.centroids.copy()
    variances = np.empty((k, d))
    weights = np.empty(k)
    global_var = np.maximum(x.var(axis=0), var_floor)
    for j in range(k):
        members = x[km.assignments == j]
        weights[j] = max(members.shape[0], 1) / n
        variances[j] = (
            np.maximum(members.var(axis=0), var_floor)
            if members.shape[0] > 1
            else global_var
        )
    weights = weights / weights.sum()

    ll_path: list[float] = []
    resp = np.full((n, k), 1.0 / k)
    prev_ll = -np.inf
    for _ in range(max_iter):
        # E step
        log_joint = _log_joint(x, weights, means, variances)
        norm = logsumexp(log_joint, axis=1)
        resp = np.exp(log_joint - norm[:, None])
        ll = float(norm.sum())
        ll_path.append(ll)
        if abs(ll - prev_ll) < tol:
            break
        prev_ll = ll
        # M step
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        weights = nk / n
        means = (resp.T @ x) / nk[:, None]
        sq = resp.T @ (x * x)
        variances = np.maximum(sq / nk[:, None] - means * means, var_floor)
    return GmmModel(weights, means, variances, resp, ll_path[-1], ll_path)


def gmm_fit(
    x: np.ndarray,
    k: int,
    rng: Rng,
    max_iter: int = 100,
    tol: float = 1e-6,
    n_restarts: int = 10,
    var_floor: float = 1e-6,
) -> GmmModel:
    """EM for a mixture of axis-aligned Gaussians over independent restarts.

    Each restart seeds its means from a fresh single-shot k-means fit;
    variances are floored at ``var_floor`` every M step, which keeps
    components from collapsing onto single points.  EM stops when the
    log-likelihood improves by less than ``tol``.  The restart with the
    best final log-likelihood wins; ties go to the earlier restart index.
    """
    x = _validate(x, k)
    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")
    column_var = x.var(axis=0)
    if np.any(column_var == 0.0):
        col = int(np.flatnonzero(column_var == 0.0)[0])
        raise DegenerateDataError(
            f"feature column {col} has zero variance; standardize or drop it"
        )

    best: GmmModel | None = None
    best_key = None
    for r in range(n_restarts):
        model = _gmm_em(x, k, rng.spawn("gmm-restart", r), max_iter, tol, var_floor)
        key = (-model.log_likelihood, r)
        if best_key is None or key < best_key:
            best_key = key
            best = model
    return best


def gmm_predict(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """Maximum-posterior component labels for new rows."""
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if x.ndim != 2 or x.shape[1] != model.means.shape[1]:
        raise DegenerateDataError(
            f"expected [n, {model.means.shape[1]}] matrix, got {x.shape}"
        )
    return _log_joint(x, model.weights, model.means, model.variances).argmax(axis=1)
