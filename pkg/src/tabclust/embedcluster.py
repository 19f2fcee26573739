"""Embedding-clustering trainers built on the shared autoencoder.

Four methods share one engine:

* ``dec``: pretrain, then fine-tune the encoder and centroids on the
  KL(P || Q) term alone with the decoder frozen (the clustering weight
  is ignored).
* ``idec``: joint objective, reconstruction plus gamma * KL(P || Q).
* ``dkm``: joint objective with a soft-min clustering term; the
  embedding width always equals the cluster count.
* ``depict1d``: same objective as ``idec`` behind a strided 1-D conv
  front end (transposed convs on the decode side); falls back to a pure
  MLP when the feature vector is too short for the conv stack.

Q is the Student's-t soft assignment against trainable centroids; P is
the sharpened target distribution, refreshed on a fixed epoch interval
and held constant in between.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass

import numpy as np

from ._kernels import pairwise_sqdist
from .autoenc import (
    Autoencoder,
    AutoencoderSpec,
    _finish_backward,
    _recon_gradients,
    encode,
    param_arrays,
    pretrain,
    recon_loss,
    reconstruct,
)
from .cluster import kmeans_fit
from .errors import (
    ConfigError,
    DegenerateDataError,
    DegenerateGeometryError,
    InvalidClusterCountError,
    TrainingDivergedError,
)
from .nn import mlp_backward, mlp_forward
from .rng import Rng

METHODS = ("dec", "idec", "dkm", "depict1d")

_MLP_WIDTHS = (500, 500, 2000)
_DEPICT_WIDTHS = (50, 50)
_DEPICT_CHANNELS = (16, 32, 64)


# ---------------------------------------------------------------------------
# losses and their gradients
# ---------------------------------------------------------------------------

def soft_assign(z: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Student's-t similarity (one degree of freedom), row normalised."""
    z = np.ascontiguousarray(np.asarray(z, dtype=np.float64))
    centroids = np.ascontiguousarray(np.asarray(centroids, dtype=np.float64))
    u = 1.0 / (1.0 + pairwise_sqdist(z, centroids))
    return u / u.sum(axis=1, keepdims=True)


def target_distribution(q: np.ndarray) -> np.ndarray:
    """Sharpen Q: square, normalise by soft cluster frequency, renormalise."""
    q = np.asarray(q, dtype=np.float64)
    weight = (q * q) / q.sum(axis=0)[None, :]
    return weight / weight.sum(axis=1, keepdims=True)


def kl_loss(p: np.ndarray, q: np.ndarray) -> float:
    """KL(P || Q) summed over rows; zero-probability P entries contribute 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DegenerateDataError(f"shape mismatch {p.shape} vs {q.shape}")
    ratio = np.zeros_like(p)
    mask = p > 0.0
    ratio[mask] = np.log(p[mask]) - np.log(np.maximum(q[mask], 1e-300))
    return float(np.sum(p * ratio))


def joint_loss(
    x: np.ndarray, x_hat: np.ndarray, p: np.ndarray, q: np.ndarray, gamma: float
) -> float:
    """Reconstruction error plus gamma-weighted KL(P || Q)."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return recon_loss(x, x_hat) + gamma * kl_loss(p, q)


def dkm_cluster_loss(z: np.ndarray, centroids: np.ndarray, inv_temp: float) -> float:
    """Sum over rows of soft-min-weighted squared centroid distances."""
    d = pairwise_sqdist(
        np.ascontiguousarray(np.asarray(z, dtype=np.float64)),
        np.ascontiguousarray(np.asarray(centroids, dtype=np.float64)),
    )
    s = _softmin(d, inv_temp)
    return float(np.sum(s * d))


def _softmin(d: np.ndarray, inv_temp: float) -> np.ndarray:
    a = -inv_temp * d
    a -= a.max(axis=1, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=1, keepdims=True)


def _kl_grads(z, centroids, p):
    """Gradients of KL(P || Q) w.r.t. embeddings and centroids."""
    d = pairwise_sqdist(z, centroids)
    u = 1.0 / (1.0 + d)
    q = u / u.sum(axis=1, keepdims=True)
    m = u * (p - q)
    dz = 2.0 * (z * m.sum(axis=1)[:, None] - m @ centroids)
    dmu = -2.0 * (m.T @ z - centroids * m.sum(axis=0)[:, None])
    return dz, dmu


def _dkm_grads(z, centroids, inv_temp):
    """Gradients of the soft-min clustering term w.r.t. z and centroids."""
    d = pairwise_sqdist(z, centroids)
    s = _softmin(d, inv_temp)
    row_obj = (s * d).sum(axis=1, keepdims=True)
    c = s * (1.0 - inv_temp * (d - row_obj))
    dz = 2.0 * (z * c.sum(axis=1)[:, None] - c @ centroids)
    dmu = -2.0 * (c.T @ z - centroids * c.sum(axis=0)[:, None])
    return dz, dmu


# ---------------------------------------------------------------------------
# configuration and results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MethodConfig:
    """Knobs for one trainer run.

    ``hidden_widths`` and ``embed_dim`` default to per-method choices
    when left as None (wide MLP for dec/idec/dkm, a small dense head for
    depict1d; embedding width 10 everywhere except dkm, which always
    embeds into as many dimensions as there are clusters).
    """

    method: str
    gamma: float = 0.1
    epochs: int = 100
    pretrain_epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 256
    p_update_interval: int = 5
    dkm_inv_temperature: float = 10.0
    dkm_anneal: bool = False
    seed: int = 0
    hidden_widths: tuple[int, ...] | None = None
    embed_dim: int | None = None
    conv_channels: tuple[int, ...] = _DEPICT_CHANNELS
    conv_width: int = 5
    conv_stride: int = 2

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError("gamma must be non-negative")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.pretrain_epochs < 0:
            raise ConfigError("pretrain_epochs must be non-negative")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.p_update_interval < 1:
            raise ConfigError("p_update_interval must be >= 1")
        if self.dkm_inv_temperature <= 0:
            raise ConfigError("dkm_inv_temperature must be positive")


@dataclass
class EpochLoss:
    epoch: int
    recon_loss: float | None
    cluster_loss: float
    total_loss: float


@dataclass
class TrainedEmbeddingModel:
    method: str
    autoencoder: Autoencoder
    centroids: np.ndarray  # [k, embed_dim]
    history: list[EpochLoss]
    config: MethodConfig
    conv_fallback: bool = False


def architecture_for(
    method: str, input_dim: int, n_clusters: int, config: MethodConfig
) -> AutoencoderSpec:
    """Autoencoder shape for a method; depict1d degrades to a pure MLP
    when the conv stack cannot produce a positive output length."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "depict1d":
        widths = config.hidden_widths if config.hidden_widths is not None else _DEPICT_WIDTHS
        embed = config.embed_dim if config.embed_dim is not None else 10
        try:
            return AutoencoderSpec(
                input_dim,
                tuple(widths),
                embed,
                conv_channels=tuple(config.conv_channels),
                conv_width=config.conv_width,
                conv_stride=config.conv_stride,
            )
        except DegenerateGeometryError:
            return AutoencoderSpec(input_dim, tuple(widths), embed)
    widths = config.hidden_widths if config.hidden_widths is not None else _MLP_WIDTHS
    if method == "dkm":
        embed = n_clusters
    else:
        embed = config.embed_dim if config.embed_dim is not None else 10
    return AutoencoderSpec(input_dim, tuple(widths), embed)


# ---------------------------------------------------------------------------
# shared training engine
# ---------------------------------------------------------------------------

def _dec_batch_grads(model: Autoencoder, xb, centroids, p_rows, scale):
    """Encoder-only backward for the frozen-decoder phase; decoder slots
    get zero gradients so one optimiser state covers every method."""
    z, tape = mlp_forward(model.encoder, xb)
    dz, dmu = _kl_grads(z, centroids, p_rows)
    enc_grads, _ = mlp_backward(model.encoder, tape, scale * dz)
    grads = []
    for gw, gb in enc_grads:
        grads.extend((gw, gb))
    for layer in model.decoder.layers:
        grads.extend((np.zeros_like(layer.weight), np.zeros_like(layer.bias)))
    return grads, scale * dmu


def train_embedding(
    spec: AutoencoderSpec,
    x: np.ndarray,
    n_clusters: int,
    config: MethodConfig,
    rng: Rng | None = None,
) -> TrainedEmbeddingModel:
    """Pretrain, seed centroids with k-means on the embedding, fine-tune.

    Updates follow per-batch means of the per-row losses; the recorded
    history keeps the dataset-sum convention.  When ``rng`` is omitted
    all randomness derives from ``config.seed``.  A non-finite epoch loss
    restores the last finite state and halves the learning rate; the
    fourth such event raises TrainingDivergedError.
    """
    from .nn import adam_step, init_adam

    method = config.method
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if x.ndim != 2 or x.shape[0] == 0:
        raise DegenerateDataError(f"expected a non-empty 2-D matrix, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DegenerateDataError("data contains non-finite values")
    if n_clusters < 1 or n_clusters > x.shape[0]:
        raise InvalidClusterCountError(
            f"cluster count {n_clusters} outside [1, {x.shape[0]}]"
        )
    if spec.input_dim != x.shape[1]:
        raise ConfigError(
            f"spec expects {spec.input_dim} features, data has {x.shape[1]}"
        )
    if method == "dkm" and spec.embed_dim != n_clusters:
        raise ConfigError(
            f"dkm requires embed_dim == n_clusters, got "
            f"{spec.embed_dim} != {n_clusters}"
        )

    rng = Rng(config.seed) if rng is None else rng
    model = pretrain(
        spec,
        x,
        epochs=config.pretrain_epochs,
        batch_size=config.batch_size,
        rng=rng.spawn("pretrain"),
        lr=config.lr,
    )

    km = kmeans_fit(encode(model, x), n_clusters, rng.spawn("centroids"))
    centroids = np.ascontiguousarray(km.centroids.copy())

    params = param_arrays(model) + [centroids]
    state = init_adam(params)
    lr = config.lr
    gamma = config.gamma
    uses_p = method in ("dec", "idec", "depict1d")
    n = x.shape[0]

    history: list[EpochLoss] = []
    p_full = None
    snapshot = ([p.copy() for p in params], None)
    halvings = 0
    epoch = 0
    while epoch < config.epochs:
        inv_temp = config.dkm_inv_temperature
        if config.dkm_anneal:
            inv_temp *= 2.0 ** (epoch // 100)
        if uses_p and (p_full is None or epoch % config.p_update_interval == 0):
            p_full = target_distribution(soft_assign(encode(model, x), centroids))
        order = rng.spawn("order", epoch, halvings).permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb = x[idx]
            scale = 1.0 / xb.shape[0]
            if method == "dec":
                grads, dmu = _dec_batch_grads(
                    model, xb, centroids, p_full[idx], scale
                )
                grads.append(dmu)
            else:
                _, parts = _recon_gradients(model, xb, grad_scale=scale)
                z = parts["enc_tape"][-1][1]
                if method == "dkm":
                    dz, dmu = _dkm_grads(z, centroids, inv_temp)
                else:
                    dz, dmu = _kl_grads(z, centroids, p_full[idx])
                z_total = parts["z_grad"] + gamma * scale * dz
                grads = _finish_backward(model, parts, z_total)
                grads.append(gamma * scale * dmu)
            adam_step(params, grads, state, lr=lr)

        z_full = encode(model, x)
        if method == "dec":
            recon = None
            cluster = kl_loss(p_full, soft_assign(z_full, centroids))
            total = cluster
        else:
            recon = recon_loss(x, reconstruct(model, x))
            if method == "dkm":
                cluster = dkm_cluster_loss(z_full, centroids, inv_temp)
            else:
                cluster = kl_loss(p_full, soft_assign(z_full, centroids))
            total = recon + gamma * cluster

        if not np.isfinite(total):
            halvings += 1
            if halvings > 3:
                raise TrainingDivergedError(
                    f"loss stayed non-finite after {halvings - 1} learning-rate "
                    f"halvings"
                )
            saved_params, saved_p = snapshot
            for p, snap in zip(params, saved_params):
                p[...] = snap
            p_full = None if saved_p is None else saved_p.copy()
            state = init_adam(params)
            lr *= 0.5
            continue

        history.append(EpochLoss(epoch, recon, cluster, total))
        snapshot = (
            [p.copy() for p in params],
            None if p_full is None else p_full.copy(),
        )
        epoch += 1

    return TrainedEmbeddingModel(
        method=method,
        autoencoder=model,
        centroids=centroids,
        history=history,
        config=config,
        conv_fallback=(method == "depict1d" and not spec.conv_channels),
    )


def _train_as(method: str, spec, x, n_clusters, config: MethodConfig, rng):
    if config.method != method:
        config = dataclasses.replace(config, method=method)
    if spec is None:
        spec = architecture_for(method, np.asarray(x).shape[1], n_clusters, config)
    return train_embedding(spec, x, n_clusters, config, rng)


def train_dec(
    spec: AutoencoderSpec | None,
    x,
    n_clusters: int,
    config: MethodConfig,
    rng: Rng | None = None,
) -> TrainedEmbeddingModel:
    return _train_as("dec", spec, x, n_clusters, config, rng)


def train_idec(
    spec: AutoencoderSpec | None,
    x,
    n_clusters: int,
    config: MethodConfig,
    rng: Rng | None = None,
) -> TrainedEmbeddingModel:
    return _train_as("idec", spec, x, n_clusters, config, rng)


def train_dkm(
    spec: AutoencoderSpec | None,
    x,
    n_clusters: int,
    config: MethodConfig,
    rng: Rng | None = None,
) -> TrainedEmbeddingModel:
    return _train_as("dkm", spec, x, n_clusters, config, rng)


def train_depict1d(
    spec: AutoencoderSpec | None,
    x,
    n_clusters: int,
    config: MethodConfig,
    rng: Rng | None = None,
) -> TrainedEmbeddingModel:
    return _train_as("depict1d", spec, x, n_clusters, config, rng)


TRAINERS = {
    "dec": train_dec,
    "idec": train_idec,
    "dkm": train_dkm,
    "depict1d": train_depict1d,
}


def predict_labels(model: TrainedEmbeddingModel, x: np.ndarray) -> np.ndarray:
    """Hard cluster labels from the trained embedding.

    KL-based methods take the argmax of the soft assignment; dkm takes
    the nearest centroid (both reduce to nearest centroid geometrically,
    kept separate to mirror each objective's own assignment rule).
    """
    z = encode(model.autoencoder, x)
    if model.method == "dkm":
        return pairwise_sqdist(
            np.ascontiguousarray(z), np.ascontiguousarray(model.centroids)
        ).argmin(axis=1)
    return soft_assign(z, model.centroids).argmax(axis=1)


def write_history_csv(model: TrainedEmbeddingModel, path) -> None:
    """Per-epoch losses as CSV; the recon column is empty for dec."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "recon_loss", "cluster_loss", "total_loss"])
        for entry in model.history:
            writer.writerow(
                [
                    entry.epoch,
                    "" if entry.recon_loss is None else repr(float(entry.recon_loss)),
                    repr(float(entry.cluster_loss)),
                    repr(float(entry.total_loss)),
                ]
            )
