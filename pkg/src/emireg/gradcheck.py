"""Finite-difference verification of the analytic backward pass.

Every learnable scalar is checked: the loss is evaluated at theta +- h
(central differences, h = 1e-5) and compared against the backward pass
with relative error |a - fd| / max(|a|, |fd|, 1e-8).

The difference quotient is computed through an independent straight-line
re-implementation of the forward pass running in extended precision
(longdouble). In float64 the loss difference carries ~1e-16 of rounding
noise, i.e. ~5e-12 in the quotient at h = 1e-5, which the 1e-8
denominator floor would amplify past the 1e-4 tolerance on near-zero
gradient coordinates. Extended precision puts the noise floor around
1e-14, far below tolerance, so any reported failure is a real
disagreement. The reference forward is also cross-checked against the
production forward at double precision, so the check covers both the
gradient math and the forward implementation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GradientCheckError, NumericError
from .model import (
    FusionModelConfig,
    FusionModelParams,
    PARAM_ORDER,
    backward,
    forward,
    init_params,
)
from .rng import Rng
from .training import mse_loss


def _sigmoid_ref(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def reference_forward(seq, valid_len: int, arrays: dict, config: FusionModelConfig,
                      dtype=np.float64) -> np.ndarray:
    """Plain-loop restatement of the architecture, precision-parametrized.

    arrays maps parameter names (PARAM_ORDER) to matrices; they are used
    at their given dtype. Only the first valid_len frames are consumed,
    which is equivalent to the production model's step masking.
    """
    seq = np.asarray(seq, dtype=dtype)[:valid_len]
    h_dim = config.hidden_dim

    def run_layer(xs, w, u, b):
        h = np.zeros(h_dim, dtype=dtype)
        c = np.zeros(h_dim, dtype=dtype)
        outs = np.empty((len(xs), h_dim), dtype=dtype)
        for t in range(len(xs)):
            pre = w @ xs[t] + u @ h + b
            i = _sigmoid_ref(pre[:h_dim])
            f = _sigmoid_ref(pre[h_dim : 2 * h_dim])
            g = np.tanh(pre[2 * h_dim : 3 * h_dim])
            o = _sigmoid_ref(pre[3 * h_dim :])
            c = f * c + i * g
            h = o * np.tanh(c)
            outs[t] = h
        return outs

    h1 = run_layer(seq, arrays["w1"], arrays["u1"], arrays["b1"])
    h2 = run_layer(h1, arrays["w2"], arrays["u2"], arrays["b2"])
    fused = h2[-1]
    if config.use_global_vector:
        fused = np.concatenate([fused, seq.mean(axis=0)])
    hidden = np.maximum(arrays["wm1"] @ fused + arrays["bm1"], 0)
    return arrays["wm2"] @ hidden + arrays["bm2"]


@dataclass
class ArrayCheck:
    name: str
    max_rel_err: float
    worst_index: tuple[int, ...]


def finite_diff_grads(loss_fn, params: FusionModelParams, h: float = 1e-5):
    """Generic float64 central differences of loss_fn() w.r.t. every scalar."""
    out = {}
    for name, arr in params.items():
        fd = np.zeros_like(arr)
        flat = arr.reshape(-1)
        fd_flat = fd.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = loss_fn()
            flat[j] = orig - h
            down = loss_fn()
            flat[j] = orig
            fd_flat[j] = (up - down) / (2.0 * h)
        out[name] = fd
    return out


def check_model_gradients(config: FusionModelConfig, seq_len: int = 5,
                          seed: int = 0, h: float = 1e-5,
                          corrupt_array: str | None = None) -> list[ArrayCheck]:
    """Compare BPTT gradients with finite differences on a random instance.

    corrupt_array perturbs one analytic gradient array before comparison;
    it exists so the failure path itself can be exercised.
    """
    if config.dropout_rate != 0.0:
        raise NumericError("gradient checking requires dropout_rate == 0")
    rng = Rng(seed)
    params = init_params(config, rng)
    seq = rng.normals(seq_len * config.input_dim).reshape(seq_len, config.input_dim)
    valid_len = seq_len

    pred, cache = forward(seq, valid_len, params, config, mode="eval")
    ref_pred = reference_forward(seq, valid_len, dict(params.items()), config)
    if not np.allclose(pred, ref_pred, rtol=0, atol=1e-10):
        raise GradientCheckError(
            "production forward disagrees with the reference forward "
            f"(max abs diff {np.abs(pred - ref_pred).max():.3e})"
        )

    target = rng.uniforms(6)
    _, d_pred = mse_loss(pred, target)
    analytic = backward(cache, d_pred, params, config)
    if corrupt_array is not None:
        if corrupt_array not in PARAM_ORDER:
            raise GradientCheckError(f"unknown parameter array {corrupt_array!r}")
        getattr(analytic, corrupt_array).reshape(-1)[0] += 1.0

    hp = np.longdouble
    arrays = {name: arr.astype(hp) for name, arr in params.items()}
    target_hp = target.astype(hp)
    h_hp = hp(h)

    def loss_at():
        diff = reference_forward(seq, valid_len, arrays, config, dtype=hp) - target_hp
        return (diff @ diff) / hp(6)

    results = []
    for name in PARAM_ORDER:
        arr = arrays[name]
        flat = arr.reshape(-1)
        fd = np.zeros(flat.size, dtype=hp)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h_hp
            up = loss_at()
            flat[j] = orig - h_hp
            down = loss_at()
            flat[j] = orig
            fd[j] = (up - down) / (2 * h_hp)
        fd64 = fd.astype(np.float64).reshape(arr.shape)
        a = getattr(analytic, name)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(fd64)), 1e-8)
        rel = np.abs(a - fd64) / denom
        worst = np.unravel_index(int(np.argmax(rel)), rel.shape)
        results.append(
            ArrayCheck(
                name=name,
                max_rel_err=float(rel.max()),
                worst_index=tuple(int(k) for k in worst),
            )
        )
    return results


def run_gradcheck(seed: int = 0, tolerance: float = 1e-4,
                  corrupt_array: str | None = None):
    """The standard desk-scale check over both global-vector settings.

    Returns (passed, worst_err, lines); the caller controls exit behavior.
    """
    lines = []
    worst = 0.0
    passed = True
    for use_global in (True, False):
        config = FusionModelConfig(
            input_dim=13, hidden_dim=8, mlp_hidden_dim=5,
            use_global_vector=use_global, dropout_rate=0.0,
        )
        checks = check_model_gradients(
            config, seq_len=5, seed=seed, corrupt_array=corrupt_array
        )
        for c in checks:
            ok = c.max_rel_err < tolerance
            passed = passed and ok
            worst = max(worst, c.max_rel_err)
            lines.append(
                f"global_vector={'on ' if use_global else 'off'} "
                f"{c.name:<4} max_rel_err={c.max_rel_err:.3e} "
                f"at {c.worst_index} {'ok' if ok else 'FAIL'}"
            )
    return passed, worst, lines
