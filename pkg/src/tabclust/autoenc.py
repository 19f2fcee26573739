"""Symmetric autoencoders: sigmoid MLPs with an optional conv front end.

The encoder applies sigmoid hidden layers and a linear embedding layer;
the decoder mirrors the widths with a linear output layer.  When conv
channels are configured, a strided 1-D convolution stack (linear, one
input channel) runs before the MLP and a matching transposed stack runs
after it, pinned to reproduce the input length exactly.

Checkpoints are JSON; float64 values survive a save/load round trip
bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._kernels import conv1d_output_length
from .errors import (
    ConfigError,
    DegenerateGeometryError,
    DimensionMismatchError,
    TrainingDivergedError,
)
from .nn import (
    ACT_LINEAR,
    ACT_SIGMOID,
    Conv1dParams,
    ConvLayer,
    ConvTransposeLayer,
    DenseLayer,
    MlpParams,
    adam_step,
    conv1d_backward,
    conv1d_forward,
    conv1d_transpose_backward,
    conv1d_transpose_forward,
    glorot_uniform,
    init_adam,
    mlp_backward,
    mlp_forward,
)
from .rng import Rng

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class AutoencoderSpec:
    """Shape contract for an autoencoder.

    ``hidden_widths`` are the encoder hidden layers; the decoder mirrors
    them.  Empty ``conv_channels`` means a pure MLP on the raw features.
    """

    input_dim: int
    hidden_widths: tuple[int, ...]
    embed_dim: int
    conv_channels: tuple[int, ...] = ()
    conv_width: int = 5
    conv_stride: int = 2

    def __post_init__(self):
        if self.input_dim < 1 or self.embed_dim < 1:
            raise ValueError("input_dim and embed_dim must be positive")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError("hidden widths must be positive")
        if self.conv_channels:
            if self.conv_width < 1 or self.conv_stride < 1:
                raise ValueError("conv width and stride must be positive")
            self.conv_geometry()  # fail fast on impossible lengths

    def conv_geometry(self) -> list[tuple[int, int]]:
        """(channels, length) after each conv layer."""
        geometry = []
        length = self.input_dim
        for i, channels in enumerate(self.conv_channels):
            if length < self.conv_width:
                raise DegenerateGeometryError(
                    f"conv layer {i}: input length {length} shorter than "
                    f"kernel width {self.conv_width}"
                )
            length = conv1d_output_length(length, self.conv_width, self.conv_stride)
            geometry.append((channels, length))
        return geometry

    @property
    def mlp_input_dim(self) -> int:
        """Width of the feature vector the dense encoder actually sees."""
        if not self.conv_channels:
            return self.input_dim
        channels, length = self.conv_geometry()[-1]
        return channels * length

    @property
    def kind(self) -> str:
        return "conv1d_front" if self.conv_channels else "mlp"

    @property
    def encoder_widths(self) -> tuple[int, ...]:
        return self.hidden_widths

    @property
    def decoder_widths(self) -> tuple[int, ...]:
        return tuple(reversed(self.hidden_widths))

    @property
    def embedding_dim(self) -> int:
        return self.embed_dim


@dataclass
class Autoencoder:
    spec: AutoencoderSpec
    encoder: MlpParams
    decoder: MlpParams
    conv: Conv1dParams | None = None
    deconv: list[ConvTransposeLayer] | None = None
    pretrain_losses: list[float] = field(default_factory=list)


def build_autoencoder(spec: AutoencoderSpec, rng: Rng) -> Autoencoder:
    """Glorot-uniform weights, zero biases, derived per-block seeds."""
    mlp_in = spec.mlp_input_dim
    enc_dims = [mlp_in, *spec.hidden_widths, spec.embed_dim]
    dec_dims = enc_dims[::-1]

    def make_mlp(dims, salt):
        layers = []
        for i, (d_in, d_out) in enumerate(zip(dims, dims[1:])):
            act = ACT_LINEAR if i == len(dims) - 2 else ACT_SIGMOID
            w = glorot_uniform(rng.spawn(salt, i), (d_in, d_out), d_in, d_out)
            layers.append(DenseLayer(w, np.zeros(d_out), act))
        return MlpParams(layers)

    encoder = make_mlp(enc_dims, "enc")
    decoder = make_mlp(dec_dims, "dec")

    conv = None
    deconv = None
    if spec.conv_channels:
        geometry = spec.conv_geometry()
        in_channels = [1, *spec.conv_channels[:-1]]
        in_lengths = [spec.input_dim, *(length for _, length in geometry[:-1])]
        conv_layers = []
        for i, (c_in, c_out) in enumerate(zip(in_channels, spec.conv_channels)):
            fan_in = c_in * spec.conv_width
            fan_out = c_out * spec.conv_width
            k = glorot_uniform(
                rng.spawn("conv", i), (c_out, c_in, spec.conv_width), fan_in, fan_out
            )
            conv_layers.append(ConvLayer(k, np.zeros(c_out), spec.conv_stride))
        conv = Conv1dParams(conv_layers)
        deconv_layers = []
        for i, (c_in, c_out) in enumerate(zip(in_channels, spec.conv_channels)):
            fan_in = c_out * spec.conv_width
            fan_out = c_in * spec.conv_width
            k = glorot_uniform(
                rng.spawn("deconv", i), (c_out, c_in, spec.conv_width), fan_in, fan_out
            )
            deconv_layers.append(
                ConvTransposeLayer(
                    k, np.zeros(c_in), spec.conv_stride, in_lengths[i]
                )
            )
        deconv = deconv_layers[::-1]  # runs from innermost maps back to input

    return Autoencoder(spec, encoder, decoder, conv, deconv)


def _check_input(model: Autoencoder, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.spec.input_dim:
        raise DimensionMismatchError(
            f"expected [n, {model.spec.input_dim}] matrix, got {x.shape}"
        )
    return x


def encode(model: Autoencoder, x: np.ndarray) -> np.ndarray:
    """Embed rows; [n, input_dim] -> [n, embed_dim]."""
    x = _check_input(model, x)
    if model.conv is not None:
        maps, _ = conv1d_forward(model.conv, x)
        x = maps.reshape(maps.shape[0], -1)
    out, _ = mlp_forward(model.encoder, x)
    return out


def decode(model: Autoencoder, z: np.ndarray) -> np.ndarray:
    """Map embeddings back to input space; [n, embed_dim] -> [n, input_dim]."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != model.spec.embed_dim:
        raise DimensionMismatchError(
            f"expected [n, {model.spec.embed_dim}] matrix, got {z.shape}"
        )
    out, _ = mlp_forward(model.decoder, z)
    if model.deconv is not None:
        channels, length = model.spec.conv_geometry()[-1]
        maps = out.reshape(out.shape[0], channels, length)
        maps, _ = conv1d_transpose_forward(model.deconv, maps)
        out = maps[:, 0, :]
    return out


def reconstruct(model: Autoencoder, x: np.ndarray) -> np.ndarray:
    return decode(model, encode(model, x))


def recon_loss(x: np.ndarray, x_hat: np.ndarray) -> float:
    """Total squared reconstruction error, summed over rows and features."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise DimensionMismatchError(
            f"input {x.shape} and reconstruction {x_hat.shape} shapes differ"
        )
    diff = x_hat - x
    return float(np.sum(diff * diff))


def recon_loss_mean(x: np.ndarray, x_hat: np.ndarray) -> float:
    """Squared reconstruction error averaged over rows (training scale)."""
    return recon_loss(x, x_hat) / np.asarray(x).shape[0]


def param_arrays(model: Autoencoder) -> list[np.ndarray]:
    """All trainable arrays in a fixed order (shared with the trainers)."""
    params: list[np.ndarray] = []
    if model.conv is not None:
        for layer in model.conv.layers:
            params.extend((layer.kernel, layer.bias))
    for layer in model.encoder.layers:
        params.extend((layer.weight, layer.bias))
    for layer in model.decoder.layers:
        params.extend((layer.weight, layer.bias))
    if model.deconv is not None:
        for layer in model.deconv:
            params.extend((layer.kernel, layer.bias))
    return params


def _forward_with_tapes(model: Autoencoder, x: np.ndarray):
    """Full reconstruction pass keeping every tape for backprop."""
    conv_tape = None
    mlp_in = x
    if model.conv is not None:
        maps, conv_tape = conv1d_forward(model.conv, x)
        map_shape = maps.shape
        mlp_in = maps.reshape(maps.shape[0], -1)
    else:
        map_shape = None
    z, enc_tape = mlp_forward(model.encoder, mlp_in)
    dec_out, dec_tape = mlp_forward(model.decoder, z)
    deconv_tape = None
    if model.deconv is not None:
        channels, length = model.spec.conv_geometry()[-1]
        maps = dec_out.reshape(dec_out.shape[0], channels, length)
        recon_maps, deconv_tape = conv1d_transpose_forward(model.deconv, maps)
        recon = recon_maps[:, 0, :]
    else:
        recon = dec_out
    return recon, (conv_tape, map_shape, enc_tape, dec_tape, deconv_tape)


def _recon_gradients(model: Autoencoder, x: np.ndarray, grad_scale: float = 1.0):
    """Loss, partial gradients and the tapes needed to finish backprop.

    The reported loss is the plain sum over rows and features; gradients
    are multiplied by ``grad_scale`` (the trainers pass 1/batch so updates
    follow the per-row mean).  The returned parts hold contributions for
    every block except the encoder; the caller finishes the encoder
    backward once it knows the total gradient at the embedding
    (reconstruction plus any clustering term).
    """
    recon, (conv_tape, map_shape, enc_tape, dec_tape, deconv_tape) = (
        _forward_with_tapes(model, x)
    )
    diff = recon - x
    loss = float(np.sum(diff * diff))
    upstream = grad_scale * 2.0 * diff

    deconv_grads = None
    if model.deconv is not None:
        deconv_grads, g_maps = conv1d_transpose_backward(
            model.deconv, deconv_tape, upstream[:, None, :]
        )
        upstream = g_maps.reshape(g_maps.shape[0], -1)
    dec_grads, z_grad = mlp_backward(model.decoder, dec_tape, upstream)
    return loss, {
        "deconv": deconv_grads,
        "decoder": dec_grads,
        "z_grad": z_grad,
        "enc_tape": enc_tape,
        "conv_tape": conv_tape,
        "map_shape": map_shape,
    }


def _finish_backward(model: Autoencoder, parts, z_total_grad):
    """Encoder (and conv) backward given the total embedding gradient;
    returns gradients aligned with param_arrays(model)."""
    enc_grads, g_in = mlp_backward(model.encoder, parts["enc_tape"], z_total_grad)
    conv_grads = None
    if model.conv is not None:
        g_maps = g_in.reshape(parts["map_shape"])
        conv_grads, _ = conv1d_backward(model.conv, parts["conv_tape"], g_maps)
    grads: list[np.ndarray] = []
    if conv_grads is not None:
        for gk, gb in conv_grads:
            grads.extend((gk, gb))
    for gw, gb in enc_grads:
        grads.extend((gw, gb))
    dec_grads = parts["decoder"]
    if dec_grads is None:
        for layer in model.decoder.layers:
            grads.extend((np.zeros_like(layer.weight), np.zeros_like(layer.bias)))
    else:
        for gw, gb in dec_grads:
            grads.extend((gw, gb))
    if parts["deconv"] is not None:
        for gk, gb in parts["deconv"]:
            grads.extend((gk, gb))
    elif model.deconv is not None:
        for layer in model.deconv:
            grads.extend((np.zeros_like(layer.kernel), np.zeros_like(layer.bias)))
    return grads


def pretrain(
    spec: AutoencoderSpec,
    x: np.ndarray,
    epochs: int = 200,
    batch_size: int = 256,
    rng: Rng | None = None,
    lr: float = 1e-3,
) -> Autoencoder:
    """Build an autoencoder and minimise reconstruction error with Adam.

    Updates follow the mini-batch mean of the squared error while the
    loss recorded per epoch in ``model.pretrain_losses`` is the full sum
    over the dataset, so reported values do not depend on batch size.
    Returns the trained model.
    """
    rng = Rng(0) if rng is None else rng
    model = build_autoencoder(spec, rng.spawn("init"))
    train_recon(model, x, rng.spawn("train"), epochs, lr, batch_size)
    return model


def train_recon(
    model: Autoencoder,
    x: np.ndarray,
    rng: Rng,
    epochs: int,
    lr: float = 1e-3,
    batch_size: int = 256,
) -> list[float]:
    """Reconstruction-only training loop on an existing model.

    Appends the full-dataset loss after each epoch to
    ``model.pretrain_losses`` and returns that list.  A non-finite epoch
    loss restores the last finite state and halves the learning rate; the
    fourth such event raises TrainingDivergedError.
    """
    x = _check_input(model, x)
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    params = param_arrays(model)
    state = init_adam(params)
    n = x.shape[0]
    losses = model.pretrain_losses
    snapshot = [p.copy() for p in params]
    halvings = 0
    epoch = 0
    while epoch < epochs:
        order = rng.spawn("pretrain-order", epoch, halvings).permutation(n)
        for start in range(0, n, batch_size):
            batch = x[order[start : start + batch_size]]
            _, parts = _recon_gradients(model, batch, grad_scale=1.0 / batch.shape[0])
            grads = _finish_backward(model, parts, parts["z_grad"])
            adam_step(params, grads, state, lr=lr)
        loss = recon_loss(x, reconstruct(model, x))
        if not np.isfinite(loss):
            halvings += 1
            if halvings > 3:
                raise TrainingDivergedError(
                    f"loss stayed non-finite after {halvings - 1} learning-rate "
                    f"halvings"
                )
            for p, snap in zip(params, snapshot):
                p[...] = snap
            state = init_adam(params)
            lr *= 0.5
            continue
        losses.append(loss)
        snapshot = [p.copy() for p in params]
        epoch += 1
    return losses


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _dense_to_json(layer: DenseLayer) -> dict:
    return {
        "weight": layer.weight.tolist(),
        "bias": layer.bias.tolist(),
        "activation": layer.activation,
    }


def save_checkpoint(model: Autoencoder, path) -> None:
    """Serialise spec and weights as JSON (schema version 1)."""
    doc = {
        "version": CHECKPOINT_VERSION,
        "spec": {
            "input_dim": model.spec.input_dim,
            "hidden_widths": list(model.spec.hidden_widths),
            "embed_dim": model.spec.embed_dim,
            "conv_channels": list(model.spec.conv_channels),
            "conv_width": model.spec.conv_width,
            "conv_stride": model.spec.conv_stride,
        },
        "encoder": [_dense_to_json(l) for l in model.encoder.layers],
        "decoder": [_dense_to_json(l) for l in model.decoder.layers],
        "pretrain_losses": list(model.pretrain_losses),
    }
    if model.conv is not None:
        doc["conv"] = [
            {"kernel": l.kernel.tolist(), "bias": l.bias.tolist(), "stride": l.stride}
            for l in model.conv.layers
        ]
        doc["deconv"] = [
            {
                "kernel": l.kernel.tolist(),
                "bias": l.bias.tolist(),
                "stride": l.stride,
                "out_len": l.out_len,
            }
            for l in model.deconv
        ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> Autoencoder:
    """Inverse of save_checkpoint; rejects unknown schema versions."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("version")
    if version != CHECKPOINT_VERSION:
        raise ConfigError(
            f"unsupported checkpoint version {version!r} "
            f"(this build reads version {CHECKPOINT_VERSION})"
        )
    spec = AutoencoderSpec(
        input_dim=doc["spec"]["input_dim"],
        hidden_widths=tuple(doc["spec"]["hidden_widths"]),
        embed_dim=doc["spec"]["embed_dim"],
        conv_channels=tuple(doc["spec"]["conv_channels"]),
        conv_width=doc["spec"]["conv_width"],
        conv_stride=doc["spec"]["conv_stride"],
    )

    def dense(entry):
        return DenseLayer(
            np.array(entry["weight"], dtype=np.float64),
            np.array(entry["bias"], dtype=np.float64),
            entry["activation"],
        )

    encoder = MlpParams([dense(e) for e in doc["encoder"]])
    decoder = MlpParams([dense(e) for e in doc["decoder"]])
    conv = None
    deconv = None
    if "conv" in doc:
        conv = Conv1dParams(
            [
                ConvLayer(
                    np.array(e["kernel"], dtype=np.float64),
                    np.array(e["bias"], dtype=np.float64),
                    e["stride"],
                )
                for e in doc["conv"]
            ]
        )
        deconv = [
            ConvTransposeLayer(
                np.array(e["kernel"], dtype=np.float64),
                np.array(e["bias"], dtype=np.float64),
                e["stride"],
                e["out_len"],
            )
            for e in doc["deconv"]
        ]
    model = Autoencoder(spec, encoder, decoder, conv, deconv)
    model.pretrain_losses = [float(v) for v in doc.get("pretrain_losses", [])]
    return model
