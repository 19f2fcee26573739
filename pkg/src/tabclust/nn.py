"""Feed-forward building blocks with hand-derived backward passes.

Dense (MLP) stacks, 1-D convolution stacks (one input channel, valid
cross-correlation) and their transposed counterparts, the Adam update
rule, and a central finite-difference oracle used by the gradient tests.
Everything operates on float64 numpy arrays; forward passes return a
tape that the matching backward pass consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _kernels
from .errors import DegenerateGeometryError, DimensionMismatchError
from .rng import Rng

ACT_SIGMOID = "sigmoid"
ACT_LINEAR = "linear"
_ACTIVATIONS = (ACT_SIGMOID, ACT_LINEAR)


# ---------------------------------------------------------------------------
# dense stacks
# ---------------------------------------------------------------------------

@dataclass
class DenseLayer:
    weight: np.ndarray  # [in_dim, out_dim]
    bias: np.ndarray    # [out_dim]
    activation: str

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise DimensionMismatchError(
                f"dense layer: weight {self.weight.shape} vs bias {self.bias.shape}"
            )
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class MlpParams:
    layers: list[DenseLayer]

    def __post_init__(self):
        for prev, cur in zip(self.layers, self.layers[1:]):
            if prev.weight.shape[1] != cur.weight.shape[0]:
                raise DimensionMismatchError(
                    f"layer widths do not chain: {prev.weight.shape[1]} "
                    f"-> {cur.weight.shape[0]}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[1]


def mlp_forward(params: MlpParams, x: np.ndarray):
    """Run the stack; returns (output, tape) where the tape holds each
    layer's input and post-activation output."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise DimensionMismatchError(
            f"input has {x.shape[1] if x.ndim == 2 else '?'} columns, "
            f"first layer expects {params.in_dim}"
        )
    tape = []
    out = x
    for layer in params.layers:
        pre = out @ layer.weight + layer.bias
        post = expit(pre) if layer.activation == ACT_SIGMOID else pre
        tape.append((out, post))
        out = post
    return out, tape


def mlp_backward(params: MlpParams, tape, upstream: np.ndarray):
    """Gradients for every layer plus the gradient w.r.t. the input.

    ``upstream`` is dLoss/dOutput for the forward pass that produced
    ``tape``.  Returns (grads, input_grad) with grads a list of
    (dW, db) tuples congruent with the layers.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    n_rows = tape[0][0].shape[0]
    if upstream.shape != (n_rows, params.out_dim):
        raise DimensionMismatchError(
            f"upstream gradient {upstream.shape} does not match output "
            f"({n_rows}, {params.out_dim})"
        )
    grads = [None] * len(params.layers)
    g = upstream
    for i in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[i]
        x_in, post = tape[i]
        if layer.activation == ACT_SIGMOID:
            g = g * post * (1.0 - post)
        grads[i] = (x_in.T @ g, g.sum(axis=0))
        g = g @ layer.weight.T
    return grads, g


def glorot_uniform(rng: Rng, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


def init_mlp(dims, activations, rng: Rng) -> MlpParams:
    """Glorot-uniform weights, zero biases.  ``dims`` has one more entry
    than ``activations``."""
    if len(dims) != len(activations) + 1:
        raise ValueError("dims must have exactly one more entry than activations")
    layers = []
    for d_in, d_out, act in zip(dims, dims[1:], activations):
        w = glorot_uniform(rng, (d_in, d_out), d_in, d_out)
        layers.append(DenseLayer(w, np.zeros(d_out), act))
    return MlpParams(layers)


# ---------------------------------------------------------------------------
# 1-D convolution stacks
# ---------------------------------------------------------------------------

@dataclass
class ConvLayer:
    kernel: np.ndarray  # [out_channels, in_channels, width]
    bias: np.ndarray    # [out_channels]
    stride: int

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.kernel.ndim != 3 or self.bias.shape != (self.kernel.shape[0],):
            raise DimensionMismatchError(
                f"conv layer: kernel {self.kernel.shape} vs bias {self.bias.shape}"
            )
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


@dataclass
class Conv1dParams:
    layers: list[ConvLayer]

    def __post_init__(self):
        if self.layers and self.layers[0].kernel.shape[1] != 1:
            raise DimensionMismatchError("first conv layer must take 1 channel")
        for prev, cur in zip(self.layers, self.layers[1:]):
            if prev.kernel.shape[0] != cur.kernel.shape[1]:
                raise DimensionMismatchError(
                    f"channel counts do not chain: {prev.kernel.shape[0]} "
                    f"-> {cur.kernel.shape[1]}"
                )

    def output_geometry(self, in_len: int):
        """(channels, length) after every layer; raises on lengths < 1."""
        geometry = []
        length = in_len
        for i, layer in enumerate(self.layers):
            width = layer.kernel.shape[2]
            if length < width:
                raise DegenerateGeometryError(
                    f"conv layer {i}: input length {length} shorter than "
                    f"kernel width {width}"
                )
            length = _kernels.conv1d_output_length(length, width, layer.stride)
            geometry.append((layer.kernel.shape[0], length))
        return geometry


def conv1d_forward(params: Conv1dParams, x: np.ndarray):
    """Treat each row of ``x`` as a length-d sequence with one channel.

    Returns (feature maps [N, C_last, L_last], tape of per-layer inputs).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatchError("conv input must be a 2-D matrix")
    params.output_geometry(x.shape[1])  # raises DegenerateGeometryError early
    out = x[:, None, :]
    tape = []
    for layer in params.layers:
        tape.append(out)
        out = _kernels.conv1d_fwd(
            np.ascontiguousarray(out), layer.kernel, layer.bias, layer.stride
        )
    return out, tape


def conv1d_backward(params: Conv1dParams, tape, upstream: np.ndarray):
    """Gradients for every conv layer plus the input gradient ([N, d])."""
    g = np.asarray(upstream, dtype=np.float64)
    grads = [None] * len(params.layers)
    for i in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[i]
        x_in = tape[i]
        if g.shape[1] != layer.kernel.shape[0]:
            raise DimensionMismatchError(
                f"upstream gradient channels {g.shape[1]} != {layer.kernel.shape[0]}"
            )
        g = np.ascontiguousarray(g)
        x_in = np.ascontiguousarray(x_in)
        gk = _kernels.conv1d_bwd_kernel(x_in, g, layer.stride, layer.kernel.shape[2])
        gb = g.sum(axis=(0, 2))
        g = _kernels.conv1d_bwd_input(g, layer.kernel, layer.stride, x_in.shape[2])
        grads[i] = (gk, gb)
    return grads, g[:, 0, :]


@dataclass
class ConvTransposeLayer:
    """Adjoint of a strided 1-D convolution, with its own weights.

    ``kernel`` is [in_channels, out_channels, width]; ``out_len`` pins the
    output length (the geometry is data independent in this package, so
    the target length lives with the layer).
    """

    kernel: np.ndarray
    bias: np.ndarray
    stride: int
    out_len: int

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.kernel.ndim != 3 or self.bias.shape != (self.kernel.shape[1],):
            raise DimensionMismatchError(
                f"conv-transpose layer: kernel {self.kernel.shape} vs bias "
                f"{self.bias.shape}"
            )


def conv1d_transpose_forward(layers: list[ConvTransposeLayer], h: np.ndarray):
    """Run a stack of transposed convolutions; returns (output, tape)."""
    out = np.asarray(h, dtype=np.float64)
    tape = []
    for layer in layers:
        if out.shape[1] != layer.kernel.shape[0]:
            raise DimensionMismatchError(
                f"conv-transpose input channels {out.shape[1]} != "
                f"{layer.kernel.shape[0]}"
            )
        tape.append(out)
        out = _kernels.conv1d_bwd_input(
            np.ascontiguousarray(out), layer.kernel, layer.stride, layer.out_len
        )
        out = out + layer.bias[None, :, None]
    return out, tape


def conv1d_transpose_backward(layers: list[ConvTransposeLayer], tape, upstream):
    """Gradients for every transpose layer plus the input-gradient."""
    g = np.ascontiguousarray(np.asarray(upstream, dtype=np.float64))
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        h_in = np.ascontiguousarray(tape[i])
        gk = _kernels.conv1d_bwd_kernel(g, h_in, layer.stride, layer.kernel.shape[2])
        gb = g.sum(axis=(0, 2))
        g = np.ascontiguousarray(
            _kernels.conv1d_fwd(
                g, layer.kernel, np.zeros(layer.kernel.shape[0]), layer.stride
            )
        )
        grads[i] = (gk, gb)
    return grads, g


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class OptimizerState:
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)


def init_adam(params: list[np.ndarray]) -> OptimizerState:
    return OptimizerState(
        step_count=0,
        first_moment=[np.zeros_like(p) for p in params],
        second_moment=[np.zeros_like(p) for p in params],
    )


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: OptimizerState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One bias-corrected Adam update, in place on params and state."""
    if lr <= 0:
        raise ValueError("lr must be positive")
    if len(grads) != len(params):
        raise DimensionMismatchError("gradient list length != parameter list length")
    state.step_count += 1
    t = state.step_count
    corr1 = 1.0 - beta1 ** t
    corr2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if g.shape != p.shape:
            raise DimensionMismatchError(
                f"gradient shape {g.shape} != parameter shape {p.shape}"
            )
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def finite_diff_grad(loss_fn, params: list[np.ndarray], h: float = 1e-5):
    """Central-difference gradient of ``loss_fn(params)`` per scalar entry.

    ``loss_fn`` must be deterministic and must not mutate its argument.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    grads = []
    for idx, p in enumerate(params):
        g = np.zeros_like(p)
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            up = loss_fn(params)
            flat_p[i] = orig - h
            down = loss_fn(params)
            flat_p[i] = orig
            flat_g[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads
