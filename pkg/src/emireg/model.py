"""Sequence regression model: two-layer LSTM, mean-pool fusion, MLP head.

Architecture, per sample:

1. Frames ``[T x input_dim]`` run through two stacked LSTM layers
   (zero initial state). Steps at or beyond ``valid_len`` are masked:
   hidden and cell state carry their last valid value forward, so
   padding never influences the output.
2. The final hidden state of layer 2 is the sequence summary.
3. If the global vector is enabled, the mean of the valid frames is
   concatenated onto the summary, giving the head direct access to
   sequence-level context alongside the recurrent encoding.
4. A two-layer MLP (relu hidden, linear output) maps the fused vector
   to 6 emotion intensities. Dropout (inverted, train mode only) is
   applied once, to the fused vector, before the MLP.

Gate packing is fixed for checkpoint stability: rows of each ``[4H x *]``
LSTM weight matrix hold input gate, forget gate, cell candidate, output
gate, in that order. The output head is linear; predictions are clamped
to [0, 1] by reporting code, never inside the model or the loss.

Everything is float64. The backward pass is exact backpropagation
through time over the same masked graph the forward pass evaluates.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .constants import FEATURE_DIM, NUM_EMOTIONS
from .errors import ConfigError, DataError, ShapeError
from .linalg import sigmoid, xavier_init
from .rng import Rng

CHECKPOINT_MAGIC = b"SEQF"
CHECKPOINT_VERSION = 1
_DROPOUT_DEN = 1_000_000

# Serialization / gradient-accumulation order of the parameter arrays.
PARAM_ORDER = ("w1", "u1", "b1", "w2", "u2", "b2", "wm1", "bm1", "wm2", "bm2")


@dataclass
class FusionModelConfig:
    """Model hyperparameters. LSTM layer count and output width are fixed."""

    input_dim: int = FEATURE_DIM
    hidden_dim: int = FEATURE_DIM
    num_lstm_layers: int = 2
    mlp_hidden_dim: int = 256
    output_dim: int = NUM_EMOTIONS
    use_global_vector: bool = True
    dropout_rate: float = 0.1

    def __post_init__(self):
        if self.num_lstm_layers != 2:
            raise ConfigError(f"num_lstm_layers is fixed at 2, got {self.num_lstm_layers}")
        if self.output_dim != NUM_EMOTIONS:
            raise ConfigError(f"output_dim is fixed at {NUM_EMOTIONS}, got {self.output_dim}")
        for name in ("input_dim", "hidden_dim", "mlp_hidden_dim"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def fused_dim(self) -> int:
        """Width of the vector entering the MLP head."""
        if self.use_global_vector:
            return self.hidden_dim + self.input_dim
        return self.hidden_dim

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        h, d, m = self.hidden_dim, self.input_dim, self.mlp_hidden_dim
        return {
            "w1": (4 * h, d),
            "u1": (4 * h, h),
            "b1": (4 * h,),
            "w2": (4 * h, h),
            "u2": (4 * h, h),
            "b2": (4 * h,),
            "wm1": (m, self.fused_dim),
            "bm1": (m,),
            "wm2": (NUM_EMOTIONS, m),
            "bm2": (NUM_EMOTIONS,),
        }


@dataclass
class FusionModelParams:
    """All weight and bias arrays, in the documented fixed order."""

    w1: np.ndarray
    u1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    u2: np.ndarray
    b2: np.ndarray
    wm1: np.ndarray
    bm1: np.ndarray
    wm2: np.ndarray
    bm2: np.ndarray

    def items(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in PARAM_ORDER]

    def copy(self) -> "FusionModelParams":
        return type(self)(**{name: arr.copy() for name, arr in self.items()})

    def validate(self, config: FusionModelConfig) -> None:
        for name, want in config.param_shapes().items():
            got = getattr(self, name).shape
            if got != want:
                raise ShapeError(f"parameter {name} has shape {got}, config requires {want}")

    def allclose(self, other: "FusionModelParams", **kw) -> bool:
        return all(np.allclose(a, getattr(other, n), **kw) for n, a in self.items())


class GradientSet(FusionModelParams):
    """Gradient arrays, shape-congruent with FusionModelParams."""


def zeros_like_params(config: FusionModelConfig, cls=GradientSet) -> GradientSet:
    return cls(**{name: np.zeros(shape) for name, shape in config.param_shapes().items()})


def init_params(config: FusionModelConfig, rng: Rng) -> FusionModelParams:
    """Xavier-uniform weights, zero biases, LSTM forget-gate biases at 1.

    Draw order is fixed (w1, u1, w2, u2, wm1, wm2) so a seed fully
    determines the result.
    """
    h, d, m = config.hidden_dim, config.input_dim, config.mlp_hidden_dim
    w1 = xavier_init(rng, d, 4 * h)
    u1 = xavier_init(rng, h, 4 * h)
    w2 = xavier_init(rng, h, 4 * h)
    u2 = xavier_init(rng, h, 4 * h)
    wm1 = xavier_init(rng, config.fused_dim, m)
    wm2 = xavier_init(rng, m, NUM_EMOTIONS)
    b1 = np.zeros(4 * h)
    b2 = np.zeros(4 * h)
    b1[h : 2 * h] = 1.0
    b2[h : 2 * h] = 1.0
    params = FusionModelParams(
        w1=w1, u1=u1, b1=b1, w2=w2, u2=u2, b2=b2,
        wm1=wm1, bm1=np.zeros(m), wm2=wm2, bm2=np.zeros(NUM_EMOTIONS),
    )
    params.validate(config)
    return params


def param_count(config: FusionModelConfig) -> int:
    """Total number of learnable scalars."""
    return sum(int(np.prod(shape)) for shape in config.param_shapes().values())


class CellCache(NamedTuple):
    """Per-step intermediates kept for the backward pass."""

    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray


def _cell_step(x, h_prev, c_prev, w, u, b):
    """One unmasked LSTM step on a [B x *] batch. Returns activated gates."""
    h_dim = u.shape[1]
    pre = x @ w.T + h_prev @ u.T + b
    i = sigmoid(pre[:, :h_dim])
    f = sigmoid(pre[:, h_dim : 2 * h_dim])
    g = np.tanh(pre[:, 2 * h_dim : 3 * h_dim])
    o = sigmoid(pre[:, 3 * h_dim :])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return i, f, g, o, c, tanh_c, h


def lstm_cell_forward(x, h_prev, c_prev, w, u, b):
    """Single LSTM step on 1-D vectors.

    Gate equations (sigma = logistic):

        i = sigma(W_i x + U_i h + b_i)    f = sigma(W_f x + U_f h + b_f)
        g = tanh (W_g x + U_g h + b_g)    o = sigma(W_o x + U_o h + b_o)
        c = f * c_prev + i * g            h = o * tanh(c)

    Returns (h, c, cache).
    """
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    h_prev = np.asarray(h_prev, dtype=np.float64).reshape(1, -1)
    c_prev = np.asarray(c_prev, dtype=np.float64).reshape(1, -1)
    h_dim = u.shape[1]
    if w.shape[0] != 4 * h_dim or x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"cell shapes inconsistent: x {x.shape[1]}, w {w.shape}, u {u.shape}"
        )
    if h_prev.shape[1] != h_dim or c_prev.shape[1] != h_dim or b.shape != (4 * h_dim,):
        raise ShapeError(
            f"cell state shapes inconsistent: h {h_prev.shape[1]}, c {c_prev.shape[1]}, "
            f"b {b.shape}, hidden {h_dim}"
        )
    i, f, g, o, c, tanh_c, h = _cell_step(x, h_prev, c_prev, w, u, b)
    cache = CellCache(x[0], h_prev[0], c_prev[0], i[0], f[0], g[0], o[0], c[0], tanh_c[0])
    return h[0], c[0], cache


def global_pool(frames, valid_len: int) -> np.ndarray:
    """Mean of frames[0:valid_len]; padding rows never contribute."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ShapeError(f"frames must be [T x dim], got shape {frames.shape}")
    if valid_len == 0:
        raise ShapeError("empty sequence: valid_len must be >= 1")
    if not 1 <= valid_len <= frames.shape[0]:
        raise ShapeError(f"valid_len {valid_len} out of range [1, {frames.shape[0]}]")
    return frames[:valid_len].mean(axis=0)


def _masked_mean(frames: np.ndarray, valid_lens: np.ndarray) -> np.ndarray:
    b, t, _ = frames.shape
    live = (np.arange(t)[None, :] < valid_lens[:, None]).astype(np.float64)
    return np.einsum("btd,bt->bd", frames, live) / valid_lens[:, None]


@dataclass
class _LayerTrace:
    """Stacked per-step state for one LSTM layer, time-major [T x B x *]."""

    gates: np.ndarray   # activated i, f, g, o packed along the last axis
    c_raw: np.ndarray   # pre-mask cell state
    tanh_c: np.ndarray  # tanh of c_raw
    h: np.ndarray       # carried hidden state
    c: np.ndarray       # carried cell state


def _layer_forward(x_seq: np.ndarray, mask: np.ndarray, w, u, b) -> _LayerTrace:
    t_len, batch, _ = x_seq.shape
    h_dim = u.shape[1]
    trace = _LayerTrace(
        gates=np.empty((t_len, batch, 4 * h_dim)),
        c_raw=np.empty((t_len, batch, h_dim)),
        tanh_c=np.empty((t_len, batch, h_dim)),
        h=np.empty((t_len, batch, h_dim)),
        c=np.empty((t_len, batch, h_dim)),
    )
    # one GEMM for the input contribution of every step
    xw = (x_seq.reshape(t_len * batch, -1) @ w.T).reshape(t_len, batch, 4 * h_dim)
    h = np.zeros((batch, h_dim))
    c = np.zeros((batch, h_dim))
    for t in range(t_len):
        pre = xw[t] + h @ u.T + b
        i = sigmoid(pre[:, :h_dim])
        f = sigmoid(pre[:, h_dim : 2 * h_dim])
        g = np.tanh(pre[:, 2 * h_dim : 3 * h_dim])
        o = sigmoid(pre[:, 3 * h_dim :])
        c_raw = f * c + i * g
        tanh_c = np.tanh(c_raw)
        h_raw = o * tanh_c
        m = mask[t]
        c = m * c_raw + (1.0 - m) * c
        h = m * h_raw + (1.0 - m) * h
        trace.gates[t, :, :h_dim] = i
        trace.gates[t, :, h_dim : 2 * h_dim] = f
        trace.gates[t, :, 2 * h_dim : 3 * h_dim] = g
        trace.gates[t, :, 3 * h_dim :] = o
        trace.c_raw[t] = c_raw
        trace.tanh_c[t] = tanh_c
        trace.h[t] = h
        trace.c[t] = c
    return trace


def _layer_backward(trace, x_seq, mask, w, u, dh_final=None, dh_seq=None, need_dx=True):
    """BPTT through one masked layer.

    dh_final injects gradient at the last step's carried hidden state;
    dh_seq injects per-step gradient (the layer above's input gradient).
    Returns (dx_seq or None, dw, du, db).
    """
    t_len, batch, h_dim = trace.h.shape
    du = np.zeros_like(u)
    db = np.zeros(4 * h_dim)
    dpre_all = np.empty((t_len, batch, 4 * h_dim))
    dh = dh_final.copy() if dh_final is not None else np.zeros((batch, h_dim))
    dc = np.zeros((batch, h_dim))
    zeros_state = np.zeros((batch, h_dim))
    for t in range(t_len - 1, -1, -1):
        if dh_seq is not None:
            dh = dh + dh_seq[t]
        m = mask[t]
        gates = trace.gates[t]
        i = gates[:, :h_dim]
        f = gates[:, h_dim : 2 * h_dim]
        g = gates[:, 2 * h_dim : 3 * h_dim]
        o = gates[:, 3 * h_dim :]
        tanh_c = trace.tanh_c[t]
        c_prev = trace.c[t - 1] if t > 0 else zeros_state
        h_prev = trace.h[t - 1] if t > 0 else zeros_state

        dh_raw = m * dh
        dc_raw = m * dc + dh_raw * o * (1.0 - tanh_c * tanh_c)
        do = dh_raw * tanh_c
        df = dc_raw * c_prev
        di = dc_raw * g
        dg = dc_raw * i

        dpre = dpre_all[t]
        dpre[:, :h_dim] = di * i * (1.0 - i)
        dpre[:, h_dim : 2 * h_dim] = df * f * (1.0 - f)
        dpre[:, 2 * h_dim : 3 * h_dim] = dg * (1.0 - g * g)
        dpre[:, 3 * h_dim :] = do * o * (1.0 - o)

        du += dpre.T @ h_prev
        db += dpre.sum(axis=0)
        dh = (1.0 - m) * dh + dpre @ u
        dc = (1.0 - m) * dc + dc_raw * f
    flat = dpre_all.reshape(t_len * batch, 4 * h_dim)
    dw = flat.T @ x_seq.reshape(t_len * batch, -1)
    dx = (flat @ w).reshape(t_len, batch, -1) if need_dx else None
    return dx, dw, du, db


@dataclass
class ForwardCache:
    """Everything backward() needs, plus the shapes it validates against."""

    config: FusionModelConfig
    mode: str
    batch: int
    t_run: int
    valid_lens: np.ndarray
    x1: np.ndarray
    mask: np.ndarray
    layer1: _LayerTrace
    layer2: _LayerTrace
    h_final: np.ndarray
    pooled: np.ndarray | None
    fused: np.ndarray          # post-dropout input to the MLP
    drop_scale: np.ndarray | None
    mlp_pre: np.ndarray
    mlp_hidden: np.ndarray
    pred: np.ndarray = field(repr=False, default=None)


def forward_batch(frames, valid_lens, params: FusionModelParams,
                  config: FusionModelConfig, mode: str = "eval",
                  rng: Rng | None = None):
    """Run a padded batch [B x T x input_dim]; returns ([B x 6], cache)."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3:
        raise ShapeError(f"batch frames must be [B x T x dim], got shape {frames.shape}")
    batch, t_max, dim = frames.shape
    if batch < 1 or t_max < 1:
        raise ShapeError(f"batch must hold at least one frame row, got shape {frames.shape}")
    if dim != config.input_dim:
        raise ShapeError(f"frame width {dim} != configured input_dim {config.input_dim}")
    valid_lens = np.asarray(valid_lens, dtype=np.int64).reshape(-1)
    if valid_lens.shape[0] != batch:
        raise ShapeError(f"{valid_lens.shape[0]} valid_lens for batch of {batch}")
    if valid_lens.min() < 1 or valid_lens.max() > t_max:
        raise ShapeError(
            f"valid_lens out of range [1, {t_max}]: min {valid_lens.min()}, max {valid_lens.max()}"
        )
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    params.validate(config)
    p = config.dropout_rate
    if mode == "train" and p > 0.0 and rng is None:
        raise ConfigError("train-mode forward with dropout_rate > 0 requires an rng")

    t_run = int(valid_lens.max())
    x1 = np.ascontiguousarray(frames[:, :t_run, :].transpose(1, 0, 2))
    mask = (np.arange(t_run)[:, None] < valid_lens[None, :]).astype(np.float64)[:, :, None]

    layer1 = _layer_forward(x1, mask, params.w1, params.u1, params.b1)
    layer2 = _layer_forward(layer1.h, mask, params.w2, params.u2, params.b2)
    h_final = layer2.h[t_run - 1]

    pooled = None
    fused_raw = h_final
    if config.use_global_vector:
        pooled = _masked_mean(frames, valid_lens)
        fused_raw = np.concatenate([h_final, pooled], axis=1)

    drop_scale = None
    fused = fused_raw
    if mode == "train" and p > 0.0:
        keep = rng.uniforms(fused_raw.size).reshape(fused_raw.shape) >= p
        drop_scale = keep.astype(np.float64) / (1.0 - p)
        fused = fused_raw * drop_scale

    mlp_pre = fused @ params.wm1.T + params.bm1
    mlp_hidden = np.maximum(mlp_pre, 0.0)
    pred = mlp_hidden @ params.wm2.T + params.bm2

    cache = ForwardCache(
        config=config, mode=mode, batch=batch, t_run=t_run, valid_lens=valid_lens,
        x1=x1, mask=mask, layer1=layer1, layer2=layer2, h_final=h_final,
        pooled=pooled, fused=fused, drop_scale=drop_scale,
        mlp_pre=mlp_pre, mlp_hidden=mlp_hidden, pred=pred,
    )
    return pred, cache


def forward(seq, valid_len: int, params: FusionModelParams, config: FusionModelConfig,
            mode: str = "eval", rng: Rng | None = None):
    """Single-sequence forward; returns (pred [6], cache)."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2:
        raise ShapeError(f"sequence must be [T x dim], got shape {seq.shape}")
    pred, cache = forward_batch(seq[None, :, :], [valid_len], params, config, mode, rng)
    return pred[0], cache


def backward(cache: ForwardCache, d_pred, params: FusionModelParams,
             config: FusionModelConfig) -> GradientSet:
    """Exact gradients of a scalar loss with d(loss)/d(pred) = d_pred.

    Covers both the recurrent path and, when enabled, the pooled-context
    path (whose gradient terminates in the input data). Dropout scaling
    from the forward pass is reapplied on the way back.
    """
    if cache.config != config:
        raise ConfigError("cache was produced under a different model config")
    d_pred = np.asarray(d_pred, dtype=np.float64)
    if d_pred.ndim == 1:
        d_pred = d_pred[None, :]
    if d_pred.shape != (cache.batch, NUM_EMOTIONS):
        raise ShapeError(
            f"d_pred shape {d_pred.shape} incompatible with batch {cache.batch}"
        )
    params.validate(config)
    h_dim = config.hidden_dim

    grads = zeros_like_params(config)
    grads.wm2[:] = d_pred.T @ cache.mlp_hidden
    grads.bm2[:] = d_pred.sum(axis=0)
    d_hidden = d_pred @ params.wm2
    d_pre = d_hidden * (cache.mlp_pre > 0)
    grads.wm1[:] = d_pre.T @ cache.fused
    grads.bm1[:] = d_pre.sum(axis=0)
    d_fused = d_pre @ params.wm1
    if cache.drop_scale is not None:
        d_fused = d_fused * cache.drop_scale
    d_h_final = d_fused[:, :h_dim]  # pooled half, if present, ends in the data

    dx2, dw2, du2, db2 = _layer_backward(
        cache.layer2, cache.layer1.h, cache.mask, params.w2, params.u2,
        dh_final=d_h_final,
    )
    _, dw1, du1, db1 = _layer_backward(
        cache.layer1, cache.x1, cache.mask, params.w1, params.u1,
        dh_seq=dx2, need_dx=False,
    )
    grads.w1[:], grads.u1[:], grads.b1[:] = dw1, du1, db1
    grads.w2[:], grads.u2[:], grads.b2[:] = dw2, du2, db2
    return grads


def _rate_to_ratio(rate: float) -> tuple[int, int]:
    return int(round(rate * _DROPOUT_DEN)), _DROPOUT_DEN


def save_params(path, params: FusionModelParams, config: FusionModelConfig) -> None:
    """Write a checkpoint.

    Layout: magic ``SEQF``; little-endian u32 fields version, input_dim,
    hidden_dim, mlp_hidden_dim, use_global_vector, dropout numerator,
    dropout denominator; then every parameter array in PARAM_ORDER as
    raw little-endian float64.
    """
    params.validate(config)
    num, den = _rate_to_ratio(config.dropout_rate)
    header = CHECKPOINT_MAGIC + struct.pack(
        "<7I",
        CHECKPOINT_VERSION, config.input_dim, config.hidden_dim,
        config.mlp_hidden_dim, int(config.use_global_vector), num, den,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for _, arr in params.items():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


_HEADER_SIZE = 4 + 7 * 4


def load_params(path, expect_config: FusionModelConfig | None = None):
    """Read a checkpoint; returns (params, config).

    If expect_config is given, the file's config block must match its
    shape-determining fields exactly.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER_SIZE:
        raise DataError(
            f"checkpoint truncated: {len(blob)} bytes, header needs {_HEADER_SIZE}"
        )
    if blob[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"bad checkpoint magic {blob[:4]!r} at byte 0")
    version, input_dim, hidden_dim, mlp_hidden, use_global, num, den = struct.unpack(
        "<7I", blob[4:_HEADER_SIZE]
    )
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version} at byte 4")
    config = FusionModelConfig(
        input_dim=input_dim, hidden_dim=hidden_dim, mlp_hidden_dim=mlp_hidden,
        use_global_vector=bool(use_global), dropout_rate=num / den,
    )
    if expect_config is not None:
        same = (
            config.input_dim == expect_config.input_dim
            and config.hidden_dim == expect_config.hidden_dim
            and config.mlp_hidden_dim == expect_config.mlp_hidden_dim
            and config.use_global_vector == expect_config.use_global_vector
        )
        if not same:
            raise DataError(
                f"checkpoint config {config} does not match expected {expect_config}"
            )
    expected = _HEADER_SIZE + 8 * param_count(config)
    if len(blob) != expected:
        raise DataError(
            f"checkpoint size {len(blob)} bytes, config requires {expected}"
            f" (payload truncated at byte {len(blob)})"
        )
    arrays = {}
    offset = _HEADER_SIZE
    for name, shape in config.param_shapes().items():
        n = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise DataError(f"non-finite values in parameter {name} at byte {offset}")
        arrays[name] = arr.reshape(shape)
        offset += 8 * n
    return FusionModelParams(**arrays), config
