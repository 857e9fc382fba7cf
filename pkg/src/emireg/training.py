"""Training loop: Adam under a cosine-decayed learning rate, MSE loss,
early stopping on the averaged validation correlation.

Determinism contract: everything a run records (shuffles, dropout,
initialization, history, returned weights) is a pure function of
(seed, data, configs). A single SplitMix64 stream is consumed in a
fixed order: weight init first, then per epoch one shuffle permutation
followed by per-batch dropout masks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import SequenceDataset, batches
from .errors import ConfigError, NumericError, ShapeError
from .metrics import MetricsReport, clamp_predictions, rho_val
from .model import (
    FusionModelConfig,
    FusionModelParams,
    GradientSet,
    PARAM_ORDER,
    backward,
    forward_batch,
    init_params,
    zeros_like_params,
)
from .rng import Rng


@dataclass
class TrainConfig:
    base_lr: float = 1e-4
    epochs: int = 30
    batch_size: int = 32
    patience: int = 5
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # Set to train for exactly N epochs with early stopping disabled
    # (the combined train+val protocol); the final epoch's weights are
    # returned instead of the best validation snapshot.
    fixed_epochs: int | None = None

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be > 0, got {self.base_lr}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.fixed_epochs is not None and self.fixed_epochs < 1:
            raise ConfigError(f"fixed_epochs must be >= 1, got {self.fixed_epochs}")


@dataclass
class EpochStats:
    epoch: int
    lr: float
    train_mse: float
    val_rho: float
    rho_per_emotion: np.ndarray


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_metric: float = -math.inf

    def val_metrics(self) -> list[float]:
        return [e.val_rho for e in self.epochs]


def mse_loss(pred, target):
    """Per-sample mean squared error over the 6 outputs.

    Returns (loss, d_loss/d_pred).
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if pred.shape != target.shape:
        raise ShapeError(f"length mismatch: pred {pred.shape[0]} vs target {target.shape[0]}")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(target))):
        raise NumericError("non-finite values in loss inputs")
    diff = pred - target
    n = pred.shape[0]
    return float(diff @ diff) / n, (2.0 / n) * diff


def mse_loss_batch(preds, targets):
    """Mean of per-sample losses; gradients carry the 1/B factor so batch
    size does not rescale the update."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape or preds.ndim != 2:
        raise ShapeError(f"shape mismatch: preds {preds.shape} vs targets {targets.shape}")
    if not (np.all(np.isfinite(preds)) and np.all(np.isfinite(targets))):
        raise NumericError("non-finite values in loss inputs")
    b, n = preds.shape
    diff = preds - targets
    loss = float(np.sum(diff * diff)) / (b * n)
    return loss, (2.0 / (b * n)) * diff


def cosine_lr(epoch: int, total_epochs: int, base_lr: float) -> float:
    """Cosine decay from base_lr at epoch 0 to 0 at the final epoch."""
    if not 0 <= epoch < total_epochs:
        raise ConfigError(f"epoch {epoch} out of range [0, {total_epochs})")
    if total_epochs == 1:
        return base_lr
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * epoch / (total_epochs - 1)))


@dataclass
class AdamState:
    m: GradientSet
    v: GradientSet
    t: int = 0


def init_adam_state(config: FusionModelConfig) -> AdamState:
    return AdamState(m=zeros_like_params(config), v=zeros_like_params(config))


def adam_step(params: FusionModelParams, grads: GradientSet, state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place, in PARAM_ORDER.

        m <- b1*m + (1-b1)*g        v <- b2*v + (1-b2)*g^2
        theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    """
    for name in PARAM_ORDER:
        g = getattr(grads, name)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter array {name!r}")
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name in PARAM_ORDER:
        g = getattr(grads, name)
        m = getattr(state.m, name)
        v = getattr(state.v, name)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        theta = getattr(params, name)
        theta -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def early_stop_check(val_metrics, patience: int) -> bool:
    """True when the last `patience` entries all failed to strictly beat
    the running best that preceded them."""
    if len(val_metrics) == 0:
        raise ConfigError("early_stop_check needs a nonempty history")
    best = -math.inf
    streak = 0
    for m in val_metrics:
        if m > best:
            best = m
            streak = 0
        else:
            streak += 1
    return streak >= patience


def evaluate_dataset(params: FusionModelParams, config: FusionModelConfig,
                     dataset: SequenceDataset, batch_size: int = 64) -> MetricsReport:
    """Eval-mode predictions over a whole split, clamped, scored."""
    preds = predict_dataset(params, config, dataset, batch_size)
    return rho_val(preds, dataset.targets)


def predict_dataset(params: FusionModelParams, config: FusionModelConfig,
                    dataset: SequenceDataset, batch_size: int = 64) -> np.ndarray:
    """[N x 6] clamped eval-mode predictions, in dataset order."""
    rows = []
    for batch in batches(dataset, batch_size, shuffle=False):
        pred, _ = forward_batch(batch.frames, batch.valid_lens, params, config, "eval")
        rows.append(pred)
    return clamp_predictions(np.vstack(rows))


def train(train_set: SequenceDataset, val_set: SequenceDataset,
          model_config: FusionModelConfig, train_config: TrainConfig,
          eval_hook=None, epoch_callback=None):
    """Full training run; returns (params, TrainHistory).

    Per epoch: seeded shuffle, padded train-mode batches, MSE backward,
    Adam step at the epoch's cosine rate, then a clamped eval-mode pass
    over the validation set. The best-validation snapshot is returned,
    unless fixed_epochs is set, in which case the final epoch's weights
    are returned (best_* fields still record the validation optimum).

    eval_hook(epoch, params) -> MetricsReport replaces the validation
    pass (used to script stopping behavior in tests); epoch_callback
    receives each EpochStats as it is recorded.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ConfigError("train and val datasets must both be nonempty")
    rng = Rng(train_config.seed)
    params = init_params(model_config, rng)
    state = init_adam_state(model_config)
    total = train_config.fixed_epochs or train_config.epochs
    history = TrainHistory()
    best_params = None
    streak = 0

    for epoch in range(total):
        lr = cosine_lr(epoch, total, train_config.base_lr)
        loss_sum = 0.0
        n_seen = 0
        for b_idx, batch in enumerate(
            batches(train_set, train_config.batch_size, rng, shuffle=True)
        ):
            preds, cache = forward_batch(
                batch.frames, batch.valid_lens, params, model_config, "train", rng
            )
            loss, d_pred = mse_loss_batch(preds, batch.targets)
            if not math.isfinite(loss):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch}, batch {b_idx}"
                )
            grads = backward(cache, d_pred, params, model_config)
            adam_step(
                params, grads, state, lr,
                train_config.adam_beta1, train_config.adam_beta2, train_config.adam_eps,
            )
            loss_sum += loss * len(batch.sample_ids)
            n_seen += len(batch.sample_ids)
        train_mse = loss_sum / n_seen

        if eval_hook is not None:
            report = eval_hook(epoch, params)
        else:
            report = evaluate_dataset(params, model_config, val_set)
        stats = EpochStats(
            epoch=epoch, lr=lr, train_mse=train_mse,
            val_rho=report.rho_val, rho_per_emotion=report.rho_per_emotion,
        )
        history.epochs.append(stats)
        if epoch_callback is not None:
            epoch_callback(stats)

        if report.rho_val > history.best_metric:
            history.best_metric = report.rho_val
            history.best_epoch = epoch
            best_params = params.copy()
            streak = 0
        else:
            streak += 1
        if train_config.fixed_epochs is None and streak >= train_config.patience:
            break

    final = params.copy() if train_config.fixed_epochs is not None else best_params
    return final, history


def history_table(history: TrainHistory) -> str:
    """Plain-text epoch table."""
    lines = [f"{'epoch':>5} {'lr':>12} {'train_mse':>12} {'val_rho':>10}"]
    for e in history.epochs:
        lines.append(f"{e.epoch:>5} {e.lr:>12.6e} {e.train_mse:>12.6e} {e.val_rho:>10.6f}")
    lines.append(
        f"best epoch {history.best_epoch} with val_rho {history.best_metric:.6f}"
    )
    return "\n".join(lines)
