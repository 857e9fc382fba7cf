"""Scikit-learn style estimator wrapping the full train/predict pipeline.

The regressor consumes ragged input: X is a list of [T_i x width] frame
matrices (lengths may differ per sample), y an [N x 6] matrix of
intensities in [0, 1]. It follows the usual conventions (get_params /
set_params / clone compatible, fitted state in trailing-underscore
attributes) so it composes with model selection utilities that accept
list-like X.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .data import SequenceDataset
from .errors import ConfigError
from .metrics import rho_val
from .model import FusionModelConfig, load_params, save_params
from .rng import Rng
from .training import TrainConfig, predict_dataset, train
from .validation import check_sequences, check_targets


class EmiLstmRegressor(BaseEstimator, RegressorMixin):
    """Two-layer LSTM sequence regressor with mean-pool context fusion.

    Parameters mirror the model and training configuration; defaults are
    the production values (1027-wide features). For experiments shrink
    hidden_dim / mlp_hidden_dim and the epoch budget.
    """

    def __init__(self, hidden_dim: int = 1027, mlp_hidden_dim: int = 256,
                 use_global_vector: bool = True, dropout_rate: float = 0.1,
                 base_lr: float = 1e-4, epochs: int = 30, batch_size: int = 32,
                 patience: int = 5, seed: int = 0, adam_beta1: float = 0.9,
                 adam_beta2: float = 0.999, adam_eps: float = 1e-8,
                 fixed_epochs: int | None = None, validation_fraction: float = 0.2):
        self.hidden_dim = hidden_dim
        self.mlp_hidden_dim = mlp_hidden_dim
        self.use_global_vector = use_global_vector
        self.dropout_rate = dropout_rate
        self.base_lr = base_lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.patience = patience
        self.seed = seed
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_eps = adam_eps
        self.fixed_epochs = fixed_epochs
        self.validation_fraction = validation_fraction

    def _model_config(self, input_dim: int) -> FusionModelConfig:
        return FusionModelConfig(
            input_dim=input_dim,
            hidden_dim=self.hidden_dim,
            mlp_hidden_dim=self.mlp_hidden_dim,
            use_global_vector=self.use_global_vector,
            dropout_rate=self.dropout_rate,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            base_lr=self.base_lr, epochs=self.epochs, batch_size=self.batch_size,
            patience=self.patience, seed=self.seed, adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2, adam_eps=self.adam_eps,
            fixed_epochs=self.fixed_epochs,
        )

    @staticmethod
    def _as_dataset(seqs, targets, prefix: str) -> SequenceDataset:
        return SequenceDataset(
            sample_ids=[f"{prefix}{i:06d}" for i in range(len(seqs))],
            sequences=seqs,
            targets=targets,
        )

    def fit(self, X, y, X_val=None, y_val=None):
        """Train on (X, y); monitor (X_val, y_val) for early stopping.

        Without an explicit validation set, a seeded tail split of
        validation_fraction is held out.
        """
        seqs = check_sequences(X)
        targets = check_targets(y, len(seqs))
        if (X_val is None) != (y_val is None):
            raise ConfigError("pass X_val and y_val together or neither")
        if X_val is not None:
            val_seqs = check_sequences(X_val)
            val_targets = check_targets(y_val, len(val_seqs))
        else:
            n_val = int(round(len(seqs) * self.validation_fraction))
            if n_val < 2 or len(seqs) - n_val < 1:
                raise ConfigError(
                    f"cannot hold out {n_val} of {len(seqs)} samples for validation; "
                    "provide X_val/y_val or more data"
                )
            order = Rng(self.seed).permutation(len(seqs))
            val_idx, train_idx = order[:n_val], order[n_val:]
            val_seqs = [seqs[i] for i in val_idx]
            val_targets = targets[val_idx]
            seqs = [seqs[i] for i in train_idx]
            targets = targets[train_idx]

        config = self._model_config(seqs[0].shape[1])
        params, history = train(
            self._as_dataset(seqs, targets, "train"),
            self._as_dataset(val_seqs, val_targets, "val"),
            config, self._train_config(),
        )
        self.model_config_ = config
        self.model_params_ = params
        self.history_ = history
        self.n_features_in_ = config.input_dim
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_params_"):
            raise NotFittedError(
                "this EmiLstmRegressor is not fitted; call fit() or load_checkpoint()"
            )

    def predict(self, X) -> np.ndarray:
        """[N x 6] intensities, clamped to [0, 1]."""
        self._check_fitted()
        seqs = check_sequences(X)
        dataset = self._as_dataset(
            seqs, np.zeros((len(seqs), 6)), "predict"
        )
        return predict_dataset(
            self.model_params_, self.model_config_, dataset, self.batch_size
        )

    def score(self, X, y) -> float:
        """Averaged per-emotion Pearson correlation (the challenge metric,
        higher is better), not the default R^2."""
        preds = self.predict(X)
        return rho_val(preds, check_targets(y, len(preds))).rho_val

    def save_checkpoint(self, path) -> None:
        self._check_fitted()
        save_params(path, self.model_params_, self.model_config_)

    def load_checkpoint(self, path) -> "EmiLstmRegressor":
        """Populate fitted state from a checkpoint file."""
        params, config = load_params(path)
        self.model_params_ = params
        self.model_config_ = config
        self.n_features_in_ = config.input_dim
        return self
