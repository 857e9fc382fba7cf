"""Evaluation metric: per-emotion Pearson correlation, averaged.

The score of a prediction matrix is the arithmetic mean of the six
per-emotion correlation coefficients

    rho_k = Cov(pred_k, label_k) / (sqrt(Var(pred_k)) * sqrt(Var(label_k)))

computed with population (1/N) normalization throughout; the choice of
1/N versus 1/(N-1) cancels in the ratio but intermediate values quoted
anywhere in this package are the 1/N forms.

A column with zero variance has no defined correlation. At the report
level such a column contributes 0.0 to the average and raises its
degenerate flag, so a model that collapses to a constant still gets a
finite, comparable (and poor) score instead of NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import EMOTIONS, NUM_EMOTIONS
from .errors import InsufficientDataError, ShapeError, ZeroVarianceError


@dataclass
class MetricsReport:
    rho_per_emotion: np.ndarray   # 6 values, fixed emotion order
    rho_val: float                # mean of rho_per_emotion
    degenerate_flags: np.ndarray  # True where a column had zero variance

    def lines(self) -> list[str]:
        out = []
        for name, rho, flag in zip(EMOTIONS, self.rho_per_emotion, self.degenerate_flags):
            suffix = "  [degenerate: zero variance]" if flag else ""
            out.append(f"rho[{name}] = {rho:+.6f}{suffix}")
        out.append(f"rho_val = {self.rho_val:+.6f}")
        return out


def pearson(x, y) -> float:
    """Correlation of two 1-D samples, clamped to [-1, 1].

    Raises InsufficientDataError for N < 2 and ZeroVarianceError when
    either input is constant.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ShapeError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    n = x.shape[0]
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {n}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("correlation inputs must be finite")
    dx = x - x.mean()
    dy = y - y.mean()
    var_x = float(dx @ dx) / n
    var_y = float(dy @ dy) / n
    if var_x == 0.0 or var_y == 0.0:
        raise ZeroVarianceError(
            f"zero variance ({'x' if var_x == 0.0 else 'y'} is constant)"
        )
    r = (float(dx @ dy) / n) / (np.sqrt(var_x) * np.sqrt(var_y))
    return float(min(1.0, max(-1.0, r)))


def rho_val(preds, labels) -> MetricsReport:
    """Column-wise pearson over [N x 6] matrices, averaged.

    Degenerate columns score 0.0 and set their flag rather than raising.
    """
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.shape != labels.shape:
        raise ShapeError(f"shape mismatch: preds {preds.shape} vs labels {labels.shape}")
    if preds.ndim != 2 or preds.shape[1] != NUM_EMOTIONS:
        raise ShapeError(f"expected [N x {NUM_EMOTIONS}] matrices, got {preds.shape}")
    if preds.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {preds.shape[0]}")
    rhos = np.zeros(NUM_EMOTIONS)
    flags = np.zeros(NUM_EMOTIONS, dtype=bool)
    for k in range(NUM_EMOTIONS):
        try:
            rhos[k] = pearson(preds[:, k], labels[:, k])
        except ZeroVarianceError:
            rhos[k] = 0.0
            flags[k] = True
    return MetricsReport(
        rho_per_emotion=rhos,
        rho_val=float(rhos.mean()),
        degenerate_flags=flags,
    )


def clamp_predictions(preds) -> np.ndarray:
    """Reporting rule: predictions are clipped to [0, 1] before scoring."""
    return np.clip(np.asarray(preds, dtype=np.float64), 0.0, 1.0)
