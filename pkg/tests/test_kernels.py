"""Kernel backends: hand-worked examples and numpy/numba agreement."""

import numpy as np
import pytest

from tabclust import _kernels
from tabclust._kernels import conv1d_output_length, numpy_kernels
from tabclust.rng import Rng

try:
    NUMBA = _kernels.numba_kernels()
except ImportError:
    NUMBA = None

NUMPY = numpy_kernels()
BACKENDS = [("numpy", NUMPY)] + ([("numba", NUMBA)] if NUMBA else [])


@pytest.mark.parametrize("name,impl", BACKENDS)
def test_pairwise_sqdist_hand_example(name, impl):
    a = np.array([[0.0, 0.0], [1.0, 2.0]])
    b = np.array([[0.0, 0.0], [3.0, 4.0], [1.0, 2.0]])
    expected = np.array([[0.0, 25.0, 5.0], [5.0, 8.0, 0.0]])
    assert np.allclose(impl["pairwise_sqdist"](a, b), expected)


def test_output_length_examples():
    assert conv1d_output_length(4, 2, 1) == 3
    assert conv1d_output_length(4, 2, 2) == 2
    assert conv1d_output_length(5, 5, 2) == 1
    assert conv1d_output_length(30, 5, 2) == 13
    # the depict-style stack on 30 features: 30 -> 13 -> 5 -> 1
    assert conv1d_output_length(13, 5, 2) == 5
    assert conv1d_output_length(5, 5, 2) == 1


@pytest.mark.parametrize("name,impl", BACKENDS)
def test_conv1d_forward_hand_examples(name, impl):
    x = np.array([[[1.0, 2.0, 3.0, 4.0]]])  # [n=1, c=1, l=4]
    k_sum = np.array([[[1.0, 1.0]]])        # [o=1, c=1, w=2]
    bias = np.zeros(1)
    y = impl["conv1d_fwd"](x, k_sum, bias, 1)
    assert np.allclose(y, [[[3.0, 5.0, 7.0]]])
    y2 = impl["conv1d_fwd"](x, np.array([[[1.0, 0.0]]]), bias, 2)
    assert np.allclose(y2, [[[1.0, 3.0]]])
    # identity kernel of width 1 reproduces the input, bias shifts it
    y3 = impl["conv1d_fwd"](x, np.array([[[1.0]]]), np.array([10.0]), 1)
    assert np.allclose(y3, x + 10.0)


@pytest.mark.parametrize("name,impl", BACKENDS)
def test_conv1d_forward_multichannel(name, impl):
    # two input channels summed with unit kernels equals channel sum
    x = np.arange(12.0).reshape(1, 2, 6)
    kernel = np.ones((1, 2, 3))
    y = impl["conv1d_fwd"](x, kernel, np.zeros(1), 1)
    windows = x[0, 0] + x[0, 1]
    expected = [
        windows[i : i + 3].sum() for i in range(4)
    ]
    assert np.allclose(y[0, 0], expected)


@pytest.mark.parametrize("name,impl", BACKENDS)
def test_conv1d_backward_matches_finite_differences(name, impl):
    rng = Rng(100)
    x = rng.spawn("x").normal((2, 3, 11))
    kernel = rng.spawn("k").normal((4, 3, 5))
    bias = np.zeros(4)
    stride = 2
    gy = rng.spawn("g").normal(
        (2, 4, conv1d_output_length(11, 5, stride))
    )

    def objective(x_val, k_val):
        return float(np.sum(impl["conv1d_fwd"](x_val, k_val, bias, stride) * gy))

    gx = impl["conv1d_bwd_input"](gy, kernel, stride, 11)
    gk = impl["conv1d_bwd_kernel"](x, gy, stride, 5)
    h = 1e-6
    for idx in [(0, 0, 0), (1, 2, 10), (0, 1, 4)]:
        bumped = x.copy(); bumped[idx] += h
        dipped = x.copy(); dipped[idx] -= h
        fd = (objective(bumped, kernel) - objective(dipped, kernel)) / (2 * h)
        assert abs(fd - gx[idx]) < 1e-5
    for idx in [(0, 0, 0), (3, 2, 4), (1, 1, 2)]:
        bumped = kernel.copy(); bumped[idx] += h
        dipped = kernel.copy(); dipped[idx] -= h
        fd = (objective(x, bumped) - objective(x, dipped)) / (2 * h)
        assert abs(fd - gk[idx]) < 1e-5


@pytest.mark.parametrize("name,impl", BACKENDS)
def test_gaussian_logpdf_against_closed_form(name, impl):
    x = np.array([[0.0, 0.0], [1.0, -1.0]])
    means = np.array([[0.0, 0.0]])
    variances = np.array([[1.0, 4.0]])
    got = impl["gaussian_diag_logpdf"](x, means, variances)
    norm = -0.5 * (2 * np.log(2 * np.pi) + np.log(4.0))
    expected = np.array([[norm], [norm - 0.5 * (1.0 + 0.25)]])
    assert np.allclose(got, expected)


@pytest.mark.skipif(NUMBA is None, reason="numba unavailable")
def test_backends_agree_on_random_inputs():
    rng = Rng(55)
    a = rng.spawn("a").normal((17, 6))
    b = rng.spawn("b").normal((9, 6))
    assert np.allclose(
        NUMPY["pairwise_sqdist"](a, b), NUMBA["pairwise_sqdist"](a, b),
        rtol=1e-12, atol=1e-12,
    )

    x = rng.spawn("x").normal((3, 2, 15))
    kernel = rng.spawn("k").normal((5, 2, 4))
    bias = rng.spawn("bias").normal(5)
    for stride in (1, 2, 3):
        y_np = NUMPY["conv1d_fwd"](x, kernel, bias, stride)
        y_nb = NUMBA["conv1d_fwd"](x, kernel, bias, stride)
        assert np.allclose(y_np, y_nb, rtol=1e-12, atol=1e-12)
        gy = rng.spawn("gy", stride).normal(y_np.shape)
        assert np.allclose(
            NUMPY["conv1d_bwd_input"](gy, kernel, stride, 15),
            NUMBA["conv1d_bwd_input"](gy, kernel, stride, 15),
            rtol=1e-12, atol=1e-12,
        )
        assert np.allclose(
            NUMPY["conv1d_bwd_kernel"](x, gy, stride, 4),
            NUMBA["conv1d_bwd_kernel"](x, gy, stride, 4),
            rtol=1e-12, atol=1e-12,
        )

    means = rng.spawn("mu").normal((4, 6))
    variances = rng.spawn("var").random((4, 6)) + 0.1
    assert np.allclose(
        NUMPY["gaussian_diag_logpdf"](a, means, variances),
        NUMBA["gaussian_diag_logpdf"](a, means, variances),
        rtol=1e-10, atol=1e-10,
    )


def test_active_backend_reports_name():
    assert _kernels.backend() in ("numpy", "numba")


def test_backend_env_override_numpy():
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c",
         "from tabclust import _kernels; print(_kernels.backend())"],
        env={"PATH": "/usr/bin:/bin", "TABCLUST_BACKEND": "numpy"},
        capture_output=True, text=True,
    )
    assert out.stdout.strip() == "numpy"


def test_backend_env_rejects_unknown():
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "import tabclust._kernels"],
        env={"PATH": "/usr/bin:/bin", "TABCLUST_BACKEND": "cuda"},
        capture_output=True, text=True,
    )
    assert out.returncode != 0
    assert "TABCLUST_BACKEND" in out.stderr
