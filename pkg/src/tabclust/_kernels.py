"""Hot numeric kernels: numba fast path with a pure-numpy fallback.

Backend selection happens once at import time from the environment
variable ``TABCLUST_BACKEND``:

* ``auto`` (default) - numba when importable, numpy otherwise
* ``numba``          - require numba, fail loudly if missing
* ``numpy``          - force the pure-numpy fallback

Both paths compute the same quantities; results may differ in the last
few ulps because numpy reductions use pairwise summation while the jitted
loops accumulate sequentially.  Within one backend every kernel is
deterministic (kernels are single-threaded on purpose).

``benchmarks/bench_kernels.py`` times the two paths against each other.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_LOG_2PI = float(np.log(2.0 * np.pi))


def conv1d_output_length(in_len: int, width: int, stride: int) -> int:
    """Valid cross-correlation output length: floor((L - W) / s) + 1."""
    return (in_len - width) // stride + 1


# ---------------------------------------------------------------------------
# numpy fallback implementations
# ---------------------------------------------------------------------------

def _pairwise_sqdist_numpy(a, b):
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("nkm,nkm->nk", diff, diff)


def _conv1d_fwd_numpy(x, kernel, bias, stride):
    n_out = conv1d_output_length(x.shape[2], kernel.shape[2], stride)
    win = sliding_window_view(x, kernel.shape[2], axis=2)[:, :, :: stride, :]
    win = win[:, :, :n_out, :]
    y = np.einsum("nclw,ocw->nol", win, kernel)
    return y + bias[None, :, None]


def _conv1d_bwd_input_numpy(gy, kernel, stride, in_len):
    n, _, n_out = gy.shape
    gx = np.zeros((n, kernel.shape[1], in_len))
    for w in range(kernel.shape[2]):
        contrib = np.einsum("nop,oc->ncp", gy, kernel[:, :, w])
        gx[:, :, w : w + stride * n_out : stride] += contrib
    return gx


def _conv1d_bwd_kernel_numpy(x, gy, stride, width):
    n_out = gy.shape[2]
    win = sliding_window_view(x, width, axis=2)[:, :, :: stride, :]
    win = win[:, :, :n_out, :]
    return np.einsum("nop,ncpw->ocw", gy, win)


def _gaussian_diag_logpdf_numpy(x, means, variances):
    # log N(x | mu_k, diag sigma_k^2) per (sample, component)
    n_dim = x.shape[1]
    log_det = np.log(variances).sum(axis=1)
    maha = np.einsum(
        "nkm,nkm->nk",
        (x[:, None, :] - means[None, :, :]) ** 2,
        1.0 / variances[None, :, :],
    )
    return -0.5 * (n_dim * _LOG_2PI + log_det[None, :] + maha)


# ---------------------------------------------------------------------------
# numba fast path
# ---------------------------------------------------------------------------

def _build_numba_kernels():
    from numba import njit

    @njit(cache=True)
    def pairwise_sqdist(a, b):
        n, m = a.shape
        k = b.shape[0]
        out = np.empty((n, k))
        for i in range(n):
            for j in range(k):
                acc = 0.0
                for c in range(m):
                    d = a[i, c] - b[j, c]
                    acc += d * d
                out[i, j] = acc
        return out

    @njit(cache=True)
    def conv1d_fwd(x, kernel, bias, stride):
        n, c_in, l_in = x.shape
        c_out, _, width = kernel.shape
        n_out = (l_in - width) // stride + 1
        y = np.empty((n, c_out, n_out))
        for i in range(n):
            for o in range(c_out):
                for p in range(n_out):
                    acc = bias[o]
                    base = p * stride
                    for c in range(c_in):
                        for w in range(width):
                            acc += x[i, c, base + w] * kernel[o, c, w]
                    y[i, o, p] = acc
        return y

    @njit(cache=True)
    def conv1d_bwd_input(gy, kernel, stride, in_len):
        n, c_out, n_out = gy.shape
        c_in = kernel.shape[1]
        width = kernel.shape[2]
        gx = np.zeros((n, c_in, in_len))
        for i in range(n):
            for o in range(c_out):
                for p in range(n_out):
                    g = gy[i, o, p]
                    base = p * stride
                    for c in range(c_in):
                        for w in range(width):
                            gx[i, c, base + w] += g * kernel[o, c, w]
        return gx

    @njit(cache=True)
    def conv1d_bwd_kernel(x, gy, stride, width):
        n, c_in, _ = x.shape
        c_out = gy.shape[1]
        n_out = gy.shape[2]
        gk = np.zeros((c_out, c_in, width))
        for i in range(n):
            for o in range(c_out):
                for p in range(n_out):
                    g = gy[i, o, p]
                    base = p * stride
                    for c in range(c_in):
                        for w in range(width):
                            gk[o, c, w] += g * x[i, c, base + w]
        return gk

    @njit(cache=True)
    def gaussian_diag_logpdf(x, means, variances):
        n, m = x.shape
        k = means.shape[0]
        out = np.empty((n, k))
        half_log_2pi = 0.5 * _LOG_2PI
        for j in range(k):
            log_det = 0.0
            for c in range(m):
                log_det += np.log(variances[j, c])
            const = -m * half_log_2pi - 0.5 * log_det
            for i in range(n):
                maha = 0.0
                for c in range(m):
                    d = x[i, c] - means[j, c]
                    maha += d * d / variances[j, c]
                out[i, j] = const - 0.5 * maha
        return out

    return {
        "pairwise_sqdist": pairwise_sqdist,
        "conv1d_fwd": conv1d_fwd,
        "conv1d_bwd_input": conv1d_bwd_input,
        "conv1d_bwd_kernel": conv1d_bwd_kernel,
        "gaussian_diag_logpdf": gaussian_diag_logpdf,
    }


_NUMPY_KERNELS = {
    "pairwise_sqdist": _pairwise_sqdist_numpy,
    "conv1d_fwd": _conv1d_fwd_numpy,
    "conv1d_bwd_input": _conv1d_bwd_input_numpy,
    "conv1d_bwd_kernel": _conv1d_bwd_kernel_numpy,
    "gaussian_diag_logpdf": _gaussian_diag_logpdf_numpy,
}


def _select_backend():
    requested = os.environ.get("TABCLUST_BACKEND", "auto").strip().lower()
    if requested not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"TABCLUST_BACKEND must be auto, numba or numpy, got {requested!r}"
        )
    if requested == "numpy":
        return "numpy", _NUMPY_KERNELS
    try:
        kernels = _build_numba_kernels()
        return "numba", kernels
    except ImportError:
        if requested == "numba":
            raise ImportError(
                "TABCLUST_BACKEND=numba but numba is not importable"
            ) from None
        return "numpy", _NUMPY_KERNELS


_BACKEND_NAME, _ACTIVE = _select_backend()


def backend() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return _BACKEND_NAME


def numpy_kernels() -> dict:
    """The fallback implementations, for tests and benchmarks."""
    return dict(_NUMPY_KERNELS)


def numba_kernels() -> dict:
    """The jitted implementations; raises ImportError when numba is absent."""
    return _build_numba_kernels()


pairwise_sqdist = _ACTIVE["pairwise_sqdist"]
conv1d_fwd = _ACTIVE["conv1d_fwd"]
conv1d_bwd_input = _ACTIVE["conv1d_bwd_input"]
conv1d_bwd_kernel = _ACTIVE["conv1d_bwd_kernel"]
gaussian_diag_logpdf = _ACTIVE["gaussian_diag_logpdf"]
