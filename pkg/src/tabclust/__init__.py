"""Clustering benchmark suite for labelled tabular data.

Flat baselines (k-means, diagonal GMM) and four embedding-clustering
trainers share a deterministic counter-based RNG, a weakly supervised
five-fold evaluation protocol, and Hungarian-matched accuracy scoring.
Hot numeric kernels run through numba when available; set
TABCLUST_BACKEND=numpy to force the pure-numpy fallback.
"""

from ._kernels import backend, conv1d_output_length, pairwise_sqdist
from .autoenc import (
    Autoencoder,
    AutoencoderSpec,
    build_autoencoder,
    decode,
    encode,
    load_checkpoint,
    pretrain,
    recon_loss,
    recon_loss_mean,
    reconstruct,
    save_checkpoint,
    train_recon,
)
from .bench import (
    BenchmarkConfig,
    config_digest,
    emit_tables,
    load_config,
    round_half_up,
    run_benchmark,
    write_results_csv,
)
from .cluster import (
    GmmModel,
    KMeansModel,
    gmm_fit,
    gmm_predict,
    kmeans_assign,
    kmeans_fit,
)
from .dataio import (
    KNOWN_DATASETS,
    Dataset,
    DatasetManifest,
    Scaler,
    load_csv,
    load_manifest,
    read_labelled_csv,
    save_manifest,
    standardize,
    synth_blobs,
    write_dataset_csv,
)
from .embedcluster import (
    EpochLoss,
    MethodConfig,
    TrainedEmbeddingModel,
    architecture_for,
    dkm_cluster_loss,
    joint_loss,
    kl_loss,
    predict_labels,
    soft_assign,
    target_distribution,
    train_dec,
    train_depict1d,
    train_dkm,
    train_embedding,
    train_idec,
    write_history_csv,
)
from .errors import (
    ConfigError,
    CsvParseError,
    DegenerateDataError,
    DegenerateGeometryError,
    DimensionMismatchError,
    IncompleteResultsError,
    InvalidClusterCountError,
    ManifestMismatchError,
    TabclustError,
    TrainingDivergedError,
)
from .evaluate import (
    ALL_METHODS,
    CandidateOutcome,
    EvalResult,
    FoldPlan,
    RankTable,
    cluster_accuracy,
    contingency,
    evaluate_candidate,
    hungarian_match,
    hyper_grid_for,
    make_folds,
    rank_methods,
    run_protocol,
    select_candidate,
)
from .rng import Rng

__version__ = "0.1.0"

__all__ = [
    "ALL_METHODS",
    "architecture_for",
    "Autoencoder",
    "AutoencoderSpec",
    "backend",
    "BenchmarkConfig",
    "build_autoencoder",
    "CandidateOutcome",
    "cluster_accuracy",
    "config_digest",
    "ConfigError",
    "contingency",
    "conv1d_output_length",
    "CsvParseError",
    "Dataset",
    "DatasetManifest",
    "decode",
    "DegenerateDataError",
    "DegenerateGeometryError",
    "DimensionMismatchError",
    "dkm_cluster_loss",
    "emit_tables",
    "encode",
    "EpochLoss",
    "EvalResult",
    "evaluate_candidate",
    "FoldPlan",
    "gmm_fit",
    "gmm_predict",
    "GmmModel",
    "hungarian_match",
    "hyper_grid_for",
    "IncompleteResultsError",
    "InvalidClusterCountError",
    "joint_loss",
    "kl_loss",
    "kmeans_assign",
    "kmeans_fit",
    "KMeansModel",
    "KNOWN_DATASETS",
    "load_checkpoint",
    "load_config",
    "load_csv",
    "load_manifest",
    "make_folds",
    "ManifestMismatchError",
    "MethodConfig",
    "pairwise_sqdist",
    "predict_labels",
    "pretrain",
    "rank_methods",
    "RankTable",
    "read_labelled_csv",
    "recon_loss",
    "recon_loss_mean",
    "reconstruct",
    "Rng",
    "round_half_up",
    "run_benchmark",
    "run_protocol",
    "save_checkpoint",
    "save_manifest",
    "Scaler",
    "select_candidate",
    "soft_assign",
    "standardize",
    "synth_blobs",
    "TabclustError",
    "target_distribution",
    "train_dec",
    "train_depict1d",
    "train_dkm",
    "train_embedding",
    "train_idec",
    "train_recon",
    "TrainedEmbeddingModel",
    "TrainingDivergedError",
    "write_dataset_csv",
    "write_history_csv",
    "write_results_csv",
]
