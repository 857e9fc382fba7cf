import math

import numpy as np
import pytest

from conftest import random_dataset, tiny_config
from emireg.data import make_batch
from emireg.errors import ConfigError, NumericError
from emireg.metrics import MetricsReport
from emireg.model import backward, forward_batch, init_params, zeros_like_params
from emireg.rng import Rng
from emireg.training import (
    TrainConfig,
    adam_step,
    cosine_lr,
    early_stop_check,
    evaluate_dataset,
    init_adam_state,
    mse_loss,
    mse_loss_batch,
    train,
)


def scripted_eval(values):
    """eval_hook yielding a canned val metric per epoch."""

    def hook(epoch, params):
        v = values[epoch]
        return MetricsReport(
            rho_per_emotion=np.full(6, v), rho_val=v,
            degenerate_flags=np.zeros(6, dtype=bool),
        )

    return hook


class TestMseLoss:
    def test_zero_case(self):
        pred = np.array([0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
        loss, grad = mse_loss(pred, pred.copy())
        assert loss == 0.0
        assert not grad.any()

    def test_unit_offset(self):
        loss, grad = mse_loss(np.ones(6), np.zeros(6))
        assert loss == 1.0
        np.testing.assert_allclose(grad, np.full(6, 1.0 / 3.0), rtol=0, atol=1e-16)

    def test_non_finite_rejected(self):
        with pytest.raises(NumericError):
            mse_loss(np.array([np.nan] * 6), np.zeros(6))

    def test_batch_mean_over_samples(self):
        rng = Rng(60)
        preds = rng.normals(24).reshape(4, 6)
        targets = rng.uniforms(24).reshape(4, 6)
        loss, grad = mse_loss_batch(preds, targets)
        per_sample = [mse_loss(preds[i], targets[i])[0] for i in range(4)]
        assert abs(loss - np.mean(per_sample)) < 1e-15
        np.testing.assert_allclose(
            grad, (2.0 / (6 * 4)) * (preds - targets), rtol=0, atol=0
        )


class TestCosineSchedule:
    def test_paper_rate_at_epoch_zero(self):
        assert cosine_lr(0, 30, 1e-4) == 1e-4

    def test_zero_at_final_epoch(self):
        assert cosine_lr(29, 30, 1e-4) == pytest.approx(0.0, abs=1e-20)

    def test_half_at_midpoint_of_odd_run(self):
        assert abs(cosine_lr(5, 11, 1e-4) - 5e-5) < 1e-19

    def test_monotone_and_bounded(self):
        rates = [cosine_lr(e, 30, 1e-4) for e in range(30)]
        assert all(a >= b for a, b in zip(rates, rates[1:]))
        assert all(0.0 <= r <= 1e-4 for r in rates)

    def test_single_epoch_run(self):
        assert cosine_lr(0, 1, 3e-3) == 3e-3

    def test_out_of_range(self):
        with pytest.raises(ConfigError):
            cosine_lr(30, 30, 1e-4)
        with pytest.raises(ConfigError):
            cosine_lr(-1, 30, 1e-4)


class TestAdam:
    def test_zero_gradients_leave_params_unchanged(self, tiny_model):
        config, params = tiny_model
        before = params.copy()
        adam_step(params, zeros_like_params(config), init_adam_state(config), 1e-3)
        for name, arr in params.items():
            assert np.array_equal(arr, getattr(before, name)), name

    def test_first_step_magnitude_is_lr(self, tiny_model):
        config, params = tiny_model
        grads = zeros_like_params(config)
        for _, arr in grads.items():
            arr.reshape(-1)[:] = 0.5  # constant gradient far above eps
        before = params.copy()
        adam_step(params, grads, init_adam_state(config), 1e-3)
        for name, arr in params.items():
            step = getattr(before, name) - arr
            np.testing.assert_allclose(step, 1e-3, rtol=1e-6, atol=0)

    def test_lr_zero_is_bitwise_noop(self, tiny_model):
        config, params = tiny_model
        grads = zeros_like_params(config)
        grads.w1 += 0.3
        before = params.copy()
        adam_step(params, grads, init_adam_state(config), 0.0)
        for name, arr in params.items():
            assert np.array_equal(arr, getattr(before, name)), name

    def test_two_optimizers_identical(self, tiny_model):
        config, _ = tiny_model
        rng = Rng(61)
        runs = []
        for _ in range(2):
            params = init_params(config, Rng(5))
            state = init_adam_state(config)
            grads = zeros_like_params(config)
            grads.w1 += 0.1
            grads.bm2 -= 0.2
            for step in range(5):
                adam_step(params, grads, state, 1e-3)
            runs.append(params)
        for name, arr in runs[0].items():
            assert np.array_equal(arr, getattr(runs[1], name)), name

    def test_non_finite_gradient_names_array(self, tiny_model):
        config, params = tiny_model
        grads = zeros_like_params(config)
        grads.u2[0, 0] = np.inf
        with pytest.raises(NumericError, match="u2"):
            adam_step(params, grads, init_adam_state(config), 1e-3)


class TestEarlyStopCheck:
    def test_improving_sequence(self):
        assert early_stop_check([0.1, 0.2, 0.3], 2) is False

    def test_two_non_improving(self):
        assert early_stop_check([0.3, 0.2, 0.25], 2) is True

    def test_tie_does_not_count_as_improvement(self):
        assert early_stop_check([0.3, 0.31, 0.30, 0.31], 2) is True

    def test_needs_history(self):
        with pytest.raises(ConfigError):
            early_stop_check([], 1)


class TestTrainLoop:
    def _sets(self, width=9, n_train=24, n_val=10, seed=70):
        rng = Rng(seed)
        return (
            random_dataset(rng, n_train, width, learnable=True),
            random_dataset(rng, n_val, width, learnable=True),
        )

    def test_patience_one_never_improving(self):
        train_set, val_set = self._sets()
        config = tiny_config()
        tc = TrainConfig(epochs=10, batch_size=8, patience=1, seed=1)
        _, history = train(
            train_set, val_set, config, tc,
            eval_hook=scripted_eval([0.5, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4]),
        )
        assert len(history.epochs) == 2  # stopped right after epoch 1
        assert history.best_epoch == 0
        assert history.best_metric == 0.5

    def test_scripted_tie_sequence_stop_epoch(self):
        train_set, val_set = self._sets()
        tc = TrainConfig(epochs=10, batch_size=8, patience=2, seed=1)
        _, history = train(
            train_set, val_set, tiny_config(), tc,
            eval_hook=scripted_eval([0.3, 0.31, 0.30, 0.31, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9]),
        )
        # ties at epochs 2 and 3 exhaust patience 2; epoch 4 never runs
        assert len(history.epochs) == 4
        assert history.best_epoch == 1
        assert history.best_metric == 0.31

    def test_improving_run_goes_to_horizon(self):
        train_set, val_set = self._sets()
        tc = TrainConfig(epochs=4, batch_size=8, patience=2, seed=1)
        _, history = train(
            train_set, val_set, tiny_config(), tc,
            eval_hook=scripted_eval([0.1, 0.2, 0.3, 0.4]),
        )
        assert len(history.epochs) == 4
        assert history.best_epoch == 3

    def test_determinism_bitwise(self):
        config = tiny_config(dropout_rate=0.1)
        results = []
        for _ in range(2):
            train_set, val_set = self._sets(seed=71)
            tc = TrainConfig(epochs=3, batch_size=8, patience=5, seed=9)
            params, history = train(train_set, val_set, config, tc)
            results.append((params, history))
        (p1, h1), (p2, h2) = results
        for name, arr in p1.items():
            assert np.array_equal(arr, getattr(p2, name)), name
        assert h1.val_metrics() == h2.val_metrics()
        assert [e.train_mse for e in h1.epochs] == [e.train_mse for e in h2.epochs]
        assert [e.lr for e in h1.epochs] == [e.lr for e in h2.epochs]

    def test_best_params_reproduce_best_metric_exactly(self):
        train_set, val_set = self._sets(seed=72)
        config = tiny_config(dropout_rate=0.1)
        tc = TrainConfig(epochs=4, batch_size=8, patience=2, seed=2)
        params, history = train(train_set, val_set, config, tc)
        report = evaluate_dataset(params, config, val_set)
        assert report.rho_val == history.best_metric

    def test_history_invariants(self):
        train_set, val_set = self._sets(seed=73)
        tc = TrainConfig(epochs=5, batch_size=8, patience=5, seed=3)
        _, history = train(train_set, val_set, tiny_config(), tc)
        vals = history.val_metrics()
        assert history.best_metric == max(vals)
        assert history.best_epoch == vals.index(max(vals))

    def test_fixed_epochs_returns_final_weights(self):
        train_set, val_set = self._sets(seed=74)
        config = tiny_config()
        tc = TrainConfig(epochs=2, batch_size=8, patience=1, seed=4, fixed_epochs=5)
        params, history = train(
            train_set, val_set, config, tc,
            eval_hook=scripted_eval([0.9, 0.1, 0.1, 0.1, 0.1]),
        )
        # no early stop despite patience 1; returned weights are epoch 4's,
        # not the epoch-0 best snapshot
        assert len(history.epochs) == 5
        assert history.best_epoch == 0
        report_vs_best = evaluate_dataset(params, config, val_set)
        assert math.isfinite(report_vs_best.rho_val)

    def test_empty_dataset_rejected(self):
        train_set, val_set = self._sets()
        empty = random_dataset(Rng(1), 1, 9)
        empty.sample_ids, empty.sequences = [], []
        empty.targets = np.zeros((0, 6))
        with pytest.raises(ConfigError):
            train(empty, val_set, tiny_config(), TrainConfig())

    def test_descent_on_repeated_batch(self):
        # 50 small-rate steps on one fixed batch never increase the loss
        config = tiny_config()
        params = init_params(config, Rng(75))
        dataset = random_dataset(Rng(76), 8, config.input_dim, learnable=True)
        batch = make_batch(dataset, list(range(8)))
        state = init_adam_state(config)
        losses = []
        for _ in range(50):
            preds, cache = forward_batch(
                batch.frames, batch.valid_lens, params, config, "train", Rng(0)
            )
            loss, d_pred = mse_loss_batch(preds, batch.targets)
            losses.append(loss)
            grads = backward(cache, d_pred, params, config)
            adam_step(params, grads, state, 1e-4)
        assert all(a >= b for a, b in zip(losses, losses[1:]))
        assert losses[-1] < losses[0]
