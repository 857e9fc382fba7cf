"""Input validation helpers for the estimator-facing API."""

from __future__ import annotations

import numpy as np

from .constants import NUM_EMOTIONS
from .errors import ShapeError


def check_sequence(seq, index=None, width: int | None = None) -> np.ndarray:
    """One sample: finite float64 [T >= 1 x width]."""
    label = "sequence" if index is None else f"sequence {index}"
    out = np.asarray(seq, dtype=np.float64)
    if out.ndim != 2 or out.shape[0] < 1:
        raise ShapeError(f"{label}: expected [T >= 1 x width] frames, got shape {out.shape}")
    if width is not None and out.shape[1] != width:
        raise ShapeError(f"{label}: width {out.shape[1]} != expected {width}")
    if not np.all(np.isfinite(out)):
        raise ShapeError(f"{label}: contains non-finite values")
    return out


def check_sequences(X) -> list[np.ndarray]:
    """A list of variable-length samples sharing one feature width."""
    if not isinstance(X, (list, tuple)) or len(X) == 0:
        raise ShapeError(
            "X must be a nonempty list of [T x width] arrays (lengths may differ)"
        )
    first = check_sequence(X[0], index=0)
    out = [first]
    for i, seq in enumerate(X[1:], start=1):
        out.append(check_sequence(seq, index=i, width=first.shape[1]))
    return out


def check_targets(y, n_samples: int, clip_range: bool = True) -> np.ndarray:
    """[N x 6] float64 targets, optionally enforced to lie in [0, 1]."""
    out = np.asarray(y, dtype=np.float64)
    if out.ndim != 2 or out.shape != (n_samples, NUM_EMOTIONS):
        raise ShapeError(
            f"y must be [{n_samples} x {NUM_EMOTIONS}], got shape {out.shape}"
        )
    if not np.all(np.isfinite(out)):
        raise ShapeError("y contains non-finite values")
    if clip_range and (out.min() < 0.0 or out.max() > 1.0):
        raise ShapeError("targets must lie in [0, 1]")
    return out
