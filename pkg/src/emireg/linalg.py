"""Dense float64 math shared by the model: products, activations, init.

Matrices are plain C-contiguous float64 numpy arrays (row-major). The
heavy products are delegated to numpy; the functions here add the shape
checking and the derivative conventions the backward pass relies on.
Derivatives are expressed in terms of the activation *output* so the
backward pass never recomputes the forward nonlinearity.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .rng import Rng


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting anything else."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {out.shape}")
    return out


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check."""
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}: "
            f"inner dimensions {a.shape[1]} != {b.shape[0]}"
        )
    return a @ b


def sigmoid(x):
    """Logistic function, numerically stable on both tails."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def sigmoid_deriv(y):
    """Derivative of sigmoid given its output y."""
    y = np.asarray(y, dtype=np.float64)
    out = y * (1.0 - y)
    return out if out.ndim else float(out)


def tanh(x):
    x = np.tanh(np.asarray(x, dtype=np.float64))
    return x if x.ndim else float(x)


def tanh_deriv(y):
    """Derivative of tanh given its output y."""
    y = np.asarray(y, dtype=np.float64)
    out = 1.0 - y * y
    return out if out.ndim else float(out)


def relu(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0)
    return out if out.ndim else float(out)


def relu_deriv(x):
    """Derivative of relu given its *input* x (subgradient 0 at x == 0)."""
    x = np.asarray(x, dtype=np.float64)
    out = (x > 0).astype(np.float64)
    return out if out.ndim else float(out)


def xavier_init(rng: Rng, fan_in: int, fan_out: int) -> np.ndarray:
    """[fan_out x fan_in] matrix, uniform in +-sqrt(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise ShapeError(f"fans must be >= 1, got fan_in={fan_in}, fan_out={fan_out}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    u = rng.uniforms(fan_out * fan_in).reshape(fan_out, fan_in)
    return (2.0 * u - 1.0) * bound
