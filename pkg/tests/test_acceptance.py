"""Acceptance gate: one test per pinned guarantee of the suite.

Each test prints a single [PASS]/[FAIL] line (bypassing pytest capture,
so the verdicts always appear in the run log) and then asserts.  The
checks favour independent oracles: central finite differences against
the backprop gradients, brute-force permutation search against the
Hungarian matcher, and a golden eight-method rank table for the table
emitter.

Compact layer widths stand in for the full benchmark architectures in
the timed end-to-end checks; the guarantees under test (gradient
correctness, protocol plumbing, monotone optimisation, determinism) do
not depend on network capacity, and the full-width defaults would not
fit the stated runtime budgets.
"""

import itertools
import os
import time

import numpy as np
import pytest

from tabclust.autoenc import (
    AutoencoderSpec,
    _finish_backward,
    _recon_gradients,
    build_autoencoder,
    encode,
    param_arrays,
    recon_loss,
    reconstruct,
)
from tabclust.bench import BenchmarkConfig, run_benchmark
from tabclust.cluster import gmm_fit, kmeans_fit
from tabclust.dataio import Dataset, read_labelled_csv, standardize, synth_blobs
from tabclust.embedcluster import (
    MethodConfig,
    TRAINERS,
    _dkm_grads,
    _kl_grads,
    dkm_cluster_loss,
    kl_loss,
    soft_assign,
    target_distribution,
)
from tabclust.evaluate import (
    cluster_accuracy,
    contingency,
    rank_methods,
    run_protocol,
)
from tabclust.nn import finite_diff_grad
from tabclust.rng import Rng


# one line per criterion; the conftest summary hook replays these after
# capture ends so verdicts always reach the terminal
VERDICTS: list[str] = []


def _verdict(criterion: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    VERDICTS.append(line)
    print(line, flush=True)
    assert ok, line


@pytest.fixture(scope="module", autouse=True)
def _warm_kernels():
    # jit compilation must not count against the runtime budgets
    spec = AutoencoderSpec(6, (4,), 2, conv_channels=(2,), conv_width=3)
    model = build_autoencoder(spec, Rng(0))
    x = Rng(1).normal((3, 6))
    _, parts = _recon_gradients(model, x)
    _finish_backward(model, parts, parts["z_grad"])
    kmeans_fit(x, 2, Rng(2))


# -- criterion 1: gradient correctness ---------------------------------------

def _grad_check(analytic, numeric):
    """(worst relative error where there is signal, worst absolute error
    on sub-noise components).  Components smaller than 1e-6 in both
    gradients carry no finite-difference information at h=1e-5 (the
    difference quotient is pure round-off, ~1e-10), so they are held to
    an absolute bound instead of a meaningless ratio."""
    worst_rel = 0.0
    worst_abs = 0.0
    for a, n in zip(analytic, numeric):
        mag = np.maximum(np.abs(a), np.abs(n))
        err = np.abs(a - n)
        signal = mag >= 1e-6
        if signal.any():
            worst_rel = max(worst_rel, float((err[signal] / mag[signal]).max()))
        if (~signal).any():
            worst_abs = max(worst_abs, float(err[~signal].max()))
    return worst_rel, worst_abs


def test_criterion_1_gradients_match_finite_differences():
    start = time.time()
    worst_rel = 0.0
    worst_abs = 0.0
    rng = Rng(2024)
    for trial in range(50):
        t = rng.spawn("trial", trial)
        d = int(t.spawn("d").integers(7)) + 2        # 2..8
        n = int(t.spawn("n").integers(7)) + 2        # 2..8
        k = int(t.spawn("k").integers(3)) + 2        # 2..4
        width = int(t.spawn("w").integers(15)) + 2   # 2..16
        conv = (2,) if d >= 5 and trial % 3 == 0 else ()
        spec = AutoencoderSpec(
            d, (width,), min(k, d), conv_channels=conv, conv_width=3
        )
        model = build_autoencoder(spec, t.spawn("init"))
        x = t.spawn("x").normal((n, d))
        centroids = t.spawn("mu").normal((k, spec.embed_dim))
        gamma = (0.1, 1.0)[trial % 2]
        inv_temp = 10.0
        params = param_arrays(model)
        full = params + [centroids]

        # squared-error reconstruction
        _, parts = _recon_gradients(model, x)
        analytic = _finish_backward(model, parts, parts["z_grad"])
        numeric = finite_diff_grad(
            lambda _p: recon_loss(x, reconstruct(model, x)), params
        )
        rel, err = _grad_check(analytic, numeric)
        worst_rel, worst_abs = max(worst_rel, rel), max(worst_abs, err)

        # joint objective with the target distribution frozen
        z0 = encode(model, x)
        p = target_distribution(soft_assign(z0, centroids))
        _, parts = _recon_gradients(model, x)
        dz, dmu = _kl_grads(z0, centroids, p)
        analytic = _finish_backward(
            model, parts, parts["z_grad"] + gamma * dz
        ) + [gamma * dmu]

        def joint(_p):
            z = encode(model, x)
            return recon_loss(x, reconstruct(model, x)) + gamma * kl_loss(
                p, soft_assign(z, centroids)
            )

        rel, err = _grad_check(analytic, finite_diff_grad(joint, full))
        worst_rel, worst_abs = max(worst_rel, rel), max(worst_abs, err)

        # soft-min clustering objective
        _, parts = _recon_gradients(model, x)
        dz, dmu = _dkm_grads(z0, centroids, inv_temp)
        analytic = _finish_backward(
            model, parts, parts["z_grad"] + gamma * dz
        ) + [gamma * dmu]

        def softmin(_p):
            z = encode(model, x)
            return recon_loss(
                x, reconstruct(model, x)
            ) + gamma * dkm_cluster_loss(z, centroids, inv_temp)

        rel, err = _grad_check(analytic, finite_diff_grad(softmin, full))
        worst_rel, worst_abs = max(worst_rel, rel), max(worst_abs, err)

    elapsed = time.time() - start
    ok = worst_rel < 1e-4 and worst_abs < 1e-7 and elapsed < 10
    _verdict(
        "criterion 1 (gradient correctness)",
        ok,
        f"50 trials, worst rel {worst_rel:.2e} (<1e-4), "
        f"worst sub-noise abs {worst_abs:.2e} (<1e-7), {elapsed:.1f}s (<10s)",
    )


# -- criterion 2: accuracy metric vs brute force ------------------------------

def test_criterion_2_accuracy_equals_bruteforce_matching():
    start = time.time()
    rng = Rng(77)
    mismatches = 0
    for trial in range(200):
        t = rng.spawn("instance", trial)
        k = int(t.spawn("k").integers(5)) + 2     # 2..6
        n = int(t.spawn("n").integers(30)) + k    # at least one row per label
        y = t.spawn("y").integers(k, size=n)
        pred = t.spawn("pred").integers(k, size=n)
        table = contingency(y, pred, k)
        best = max(
            sum(int(table[i, perm[i]]) for i in range(k))
            for perm in itertools.permutations(range(k))
        )
        if cluster_accuracy(y, pred, k) != float(best) / n * 100.0:
            mismatches += 1
    elapsed = time.time() - start
    ok = mismatches == 0 and elapsed < 5
    _verdict(
        "criterion 2 (metric oracle equivalence)",
        ok,
        f"200 instances K<=6, {mismatches} mismatches (0 allowed), "
        f"{elapsed:.1f}s (<5s)",
    )


# -- criterion 3: monotone optimisation ---------------------------------------

def test_criterion_3_losses_decrease_monotonically():
    start = time.time()
    problems = []

    blobs = synth_blobs(n=200, dim=30, n_clusters=3, separation=10.0, rng=Rng(3))
    x, _ = standardize(blobs.features)

    km = kmeans_fit(x, 3, Rng(4), n_restarts=3)
    if not np.all(np.diff(km.inertia_path) <= 1e-12):
        problems.append("k-means inertia increased")

    gm = gmm_fit(x, 3, Rng(5), n_restarts=3)
    if not np.all(np.diff(gm.ll_path) >= -1e-9):
        problems.append("GMM log-likelihood decreased beyond 1e-9")

    # full-batch updates with the sharpened target pinned at its initial
    # value keep each trainer minimising one fixed objective; periodic
    # target refreshes change the objective mid-run and legitimately bump
    # the recorded loss, which is not an optimisation defect
    for method, trainer in TRAINERS.items():
        widths = (50, 50) if method == "depict1d" else (32, 16)
        cfg = MethodConfig(
            method=method,
            epochs=60,
            pretrain_epochs=50,
            hidden_widths=widths,
            embed_dim=10,
            batch_size=x.shape[0],
            p_update_interval=10_000,
        )
        model = trainer(None, x, 3, cfg, Rng(6))
        history = np.array([e.total_loss for e in model.history])
        smooth = np.convolve(history, np.ones(10) / 10, mode="valid")
        tail = smooth[smooth.shape[0] // 2 :]
        if not np.all(np.diff(tail) <= 1e-9):
            problems.append(f"{method} smoothed loss increased in final half")

    elapsed = time.time() - start
    ok = not problems and elapsed < 120
    _verdict(
        "criterion 3 (monotone optimisation)",
        ok,
        (f"no violations, {elapsed:.1f}s (<120s)" if not problems
         else "; ".join(problems)),
    )


# -- criterion 4: distribution invariants -------------------------------------

def test_criterion_4_assignment_distribution_invariants():
    rng = Rng(9)
    worst_row = 0.0
    min_kl = np.inf
    worst_self = 0.0
    for trial in range(30):
        t = rng.spawn("trial", trial)
        n = int(t.spawn("n").integers(40)) + 2
        k = int(t.spawn("k").integers(6)) + 2
        e = int(t.spawn("e").integers(8)) + 2
        z = t.spawn("z").normal((n, e)) * 3.0
        centroids = t.spawn("mu").normal((k, e)) * 3.0
        q = soft_assign(z, centroids)
        p = target_distribution(q)
        worst_row = max(
            worst_row,
            float(np.abs(q.sum(axis=1) - 1.0).max()),
            float(np.abs(p.sum(axis=1) - 1.0).max()),
        )
        kl = kl_loss(p, q)
        if np.abs(p - q).max() > 1e-9:
            min_kl = min(min_kl, kl)      # P != Q must give KL > 0
        worst_self = max(worst_self, kl_loss(q, q))

    # single-sample fixpoint: sharpening a one-row Q returns it unchanged
    fix_err = 0.0
    for trial in range(20):
        q = Rng(trial).random((1, 4)) + 1e-3
        q /= q.sum()
        fix_err = max(fix_err, float(np.abs(target_distribution(q) - q).max()))

    ok = (
        worst_row < 1e-9
        and min_kl > 0.0
        and worst_self < 1e-12
        and fix_err < 1e-12
    )
    _verdict(
        "criterion 4 (distribution invariants)",
        ok,
        f"row-sum err {worst_row:.1e} (<1e-9), KL(P,Q)>0 held "
        f"(min {min_kl:.2e}), KL(Q,Q) {worst_self:.1e} (<1e-12), "
        f"N=1 fixpoint err {fix_err:.1e} (<1e-12)",
    )


# -- criterion 5: end-to-end synthetic recovery -------------------------------

def test_criterion_5_protocol_recovers_separated_blobs():
    start = time.time()
    ds = synth_blobs(
        n=600, dim=10, n_clusters=4, separation=20.0, sigma=1.0, rng=Rng(42)
    )
    base = MethodConfig(
        method="idec",
        epochs=100,
        pretrain_epochs=100,
        hidden_widths=(64, 32),
        embed_dim=10,
        batch_size=256,
        conv_channels=(8, 16),
    )
    padded = Dataset(
        name="blobs32",
        features=np.hstack([ds.features, np.zeros((ds.n, 32 - ds.dim))]),
        labels=ds.labels,
        label_names=list(ds.label_names),
    )
    means = {}
    for method in ("kmeans", "gmm", "dec", "idec", "dkm"):
        means[method] = run_protocol(
            method, ds, rng=Rng(7), base_config=base
        ).mean
    means["depict1d"] = run_protocol(
        "depict1d", padded, rng=Rng(7), base_config=base
    ).mean
    elapsed = time.time() - start

    floors = {m: 95.0 for m in ("kmeans", "gmm", "dec", "idec", "dkm")}
    floors["depict1d"] = 90.0
    short = {m: round(v, 1) for m, v in means.items()}
    ok = all(means[m] >= floors[m] for m in floors) and elapsed < 120
    _verdict(
        "criterion 5 (synthetic end-to-end)",
        ok,
        f"fold-mean accuracies {short} (floors 95/90 for depict1d), "
        f"{elapsed:.1f}s (<120s at the 100-epoch smoke setting)",
    )


# -- criterion 6: rank table golden fixture -----------------------------------

GOLDEN_METHODS = [
    "AE-CM", "DEC", "DEPICT", "DKM", "DynAE", "GMM", "IDEC", "K-means",
]
GOLDEN_ACCURACY = np.array(
    [
        [77.7, 68.3, 91.2, 64.2, 92.1, 89.8, 83.6, 90.2],
        [55.5, 50.0, 62.3, 23.2, 77.4, 76.8, 78.8, 76.2],
        [30.7, 29.2, 35.7, 35.4, 31.5, 29.4, 32.4, 29.2],
        [73.3, 78.9, 56.3, 48.7, 73.1, 79.1, 85.8, 79.1],
        [36.0, 36.2, 25.3, 17.2, 42.2, 40.8, 40.6, 40.2],
        [53.7, 68.0, 55.3, 56.5, 47.9, 67.2, 77.4, 71.4],
        [37.5, 38.3, 37.2, 31.1, 37.2, 39.4, 42.4, 37.2],
    ]
)
GOLDEN_RANKS = np.array(
    [
        [6, 7, 2, 8, 1, 4, 5, 3],
        [6, 7, 5, 8, 2, 3, 1, 4],
        [5, 7, 1, 2, 4, 6, 3, 8],
        [5, 4, 7, 8, 6, 2, 1, 3],
        [6, 5, 7, 8, 1, 2, 3, 4],
        [7, 3, 6, 5, 8, 4, 1, 2],
        [4, 3, 5, 8, 6, 2, 1, 7],
    ]
)
GOLDEN_AVERAGE = [5.6, 5.1, 4.7, 6.7, 4.0, 3.3, 2.2, 4.4]
GOLDEN_BEST_TO_WORST = [
    "IDEC", "GMM", "DynAE", "K-means", "DEPICT", "DEC", "AE-CM", "DKM",
]


def test_criterion_6_rank_table_matches_golden_fixture():
    table = rank_methods(GOLDEN_ACCURACY, GOLDEN_METHODS)
    ranks_ok = np.array_equal(table.per_dataset_ranks, GOLDEN_RANKS)
    avg_err = float(np.abs(table.average_rank - GOLDEN_AVERAGE).max())
    ordering = [
        GOLDEN_METHODS[j] for j in np.argsort(table.overall_rank, kind="stable")
    ]
    order_ok = ordering == GOLDEN_BEST_TO_WORST
    ok = ranks_ok and avg_err <= 0.1 and order_ok
    _verdict(
        "criterion 6 (rank-table golden test)",
        ok,
        f"per-dataset ranks {'exact' if ranks_ok else 'WRONG'}, "
        f"average-rank max dev {avg_err:.3f} (<=0.1), overall order "
        f"{'matches' if order_ok else ordering}",
    )


# -- criterion 7: real-data baseline band (non-blocking) ----------------------

def _breast_cancer_dataset():
    path = os.environ.get("TABCLUST_BREAST_CANCER_CSV")
    if path:
        return read_labelled_csv(path, name="breast_cancer")
    try:
        from sklearn.datasets import load_breast_cancer
    except ImportError:
        return None
    raw = load_breast_cancer()
    return Dataset(
        name="breast_cancer", features=raw.data, labels=raw.target
    )


def test_criterion_7_breast_cancer_baseline_band():
    ds = _breast_cancer_dataset()
    if ds is None:
        VERDICTS.append(
            "[SKIP] criterion 7 (real-data baselines): no breast cancer CSV; "
            "set TABCLUST_BREAST_CANCER_CSV or install scikit-learn"
        )
        pytest.skip("breast cancer data unavailable (non-blocking criterion)")
    assert (ds.n, ds.dim, ds.k) == (569, 30, 2)
    scaled, _ = standardize(ds)
    km = run_protocol("kmeans", scaled, rng=Rng(0)).mean
    gm = run_protocol("gmm", scaled, rng=Rng(0)).mean
    ok = abs(km - 90.2) <= 6.0 and abs(gm - 89.8) <= 6.0
    _verdict(
        "criterion 7 (real-data baselines)",
        ok,
        f"breast cancer 5-fold means: k-means {km:.1f} (90.2 +/- 6), "
        f"GMM {gm:.1f} (89.8 +/- 6)",
    )


# -- criterion 8: deterministic runs ------------------------------------------

def test_criterion_8_runs_are_byte_identical(tmp_path, monkeypatch):
    from tabclust.cli import main

    csv_path = tmp_path / "blobs.csv"
    rc = main(
        ["gen-synth", "--out", str(csv_path), "--n", "60", "--dim", "4",
         "--k", "2", "--sep", "14.0", "--seed", "11"]
    )
    assert rc == 0

    def run(out_dir, threads):
        config = {
            "datasets": [str(tmp_path / "blobs.manifest.json")],
            "methods": ["kmeans", "gmm", "idec"],
            "output_dir": str(out_dir),
            "epochs": 3,
            "seed": 0,
            "gamma_grid": [0.1, 1.0],
            "method_overrides": {
                "pretrain_epochs": 20,
                "hidden_widths": [8],
                "embed_dim": 3,
                "batch_size": 32,
            },
        }
        monkeypatch.setenv("BENCH_THREADS", str(threads))
        summary = run_benchmark(BenchmarkConfig(**config))
        assert summary["complete"] and summary["units_failed"] == 0
        return {
            name: open(os.path.join(out_dir, name), "rb").read()
            for name in ("results.csv", "accuracy_table.csv", "rank_table.csv")
        }

    first = run(tmp_path / "a", threads=1)
    second = run(tmp_path / "b", threads=1)
    parallel = run(tmp_path / "c", threads=2)
    repeat_ok = first == second
    parallel_ok = first == parallel
    ok = repeat_ok and parallel_ok
    _verdict(
        "criterion 8 (deterministic runs)",
        ok,
        f"repeat run byte-identical: {repeat_ok}, "
        f"2-worker run byte-identical: {parallel_ok}",
    )
