"""Audio-based emotional mimicry intensity regression.

A two-layer LSTM over 1027-dim feature sequences (1024 acoustic dims +
3 valence/arousal/dominance dims), fused with a global mean-pooling
context vector and finished by a two-layer MLP head, trained with MSE
under Adam and a cosine-decayed learning rate. Ships with the averaged
per-emotion Pearson evaluation metric, binary dataset/checkpoint
formats, a synthetic-data harness with plantable signal, a CLI, and a
scikit-learn style estimator.
"""

from .constants import EMOTIONS, FEATURE_DIM, NUM_EMOTIONS
from .data import (
    Batch,
    Manifest,
    ManifestRecord,
    SequenceDataset,
    SynthConfig,
    batches,
    load_manifest,
    load_split,
    read_features,
    synth_generate,
    write_features,
    write_manifest,
)
from .estimator import EmiLstmRegressor
from .metrics import MetricsReport, clamp_predictions, pearson, rho_val
from .model import (
    FusionModelConfig,
    FusionModelParams,
    GradientSet,
    backward,
    forward,
    forward_batch,
    global_pool,
    init_params,
    load_params,
    lstm_cell_forward,
    param_count,
    save_params,
)
from .rng import Rng
from .training import (
    AdamState,
    TrainConfig,
    TrainHistory,
    adam_step,
    cosine_lr,
    early_stop_check,
    evaluate_dataset,
    init_adam_state,
    mse_loss,
    mse_loss_batch,
    predict_dataset,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "EMOTIONS", "FEATURE_DIM", "NUM_EMOTIONS",
    "Batch", "Manifest", "ManifestRecord", "SequenceDataset", "SynthConfig",
    "batches", "load_manifest", "load_split", "read_features",
    "synth_generate", "write_features", "write_manifest",
    "EmiLstmRegressor",
    "MetricsReport", "clamp_predictions", "pearson", "rho_val",
    "FusionModelConfig", "FusionModelParams", "GradientSet",
    "backward", "forward", "forward_batch", "global_pool", "init_params",
    "load_params", "lstm_cell_forward", "param_count", "save_params",
    "Rng",
    "AdamState", "TrainConfig", "TrainHistory", "adam_step", "cosine_lr",
    "early_stop_check", "evaluate_dataset", "init_adam_state", "mse_loss",
    "mse_loss_batch", "predict_dataset", "train",
]
