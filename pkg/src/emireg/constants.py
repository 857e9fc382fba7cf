"""Shared constants: emotion ordering and feature layout."""

# Fixed emotion order used everywhere: target vectors, manifest columns,
# metric reports, prediction exports.
EMOTIONS = (
    "admiration",
    "amusement",
    "determination",
    "empathic_pain",
    "excitement",
    "joy",
)

NUM_EMOTIONS = len(EMOTIONS)

# Per-frame feature layout: 1024 acoustic embedding dims followed by
# 3 valence/arousal/dominance dims.
ACOUSTIC_DIM = 1024
VAD_DIM = 3
FEATURE_DIM = ACOUSTIC_DIM + VAD_DIM
