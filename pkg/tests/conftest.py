"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

from emireg.data import SequenceDataset
from emireg.model import FusionModelConfig, init_params
from emireg.rng import Rng


def tiny_config(**overrides) -> FusionModelConfig:
    base = dict(input_dim=9, hidden_dim=6, mlp_hidden_dim=4, dropout_rate=0.0)
    base.update(overrides)
    return FusionModelConfig(**base)


def random_dataset(rng: Rng, n: int, width: int, len_range=(3, 7),
                   learnable: bool = False) -> SequenceDataset:
    """In-memory dataset; optionally plants targets in the first 6 dims."""
    seqs = []
    targets = rng.uniforms(n * 6).reshape(n, 6)
    for i in range(n):
        t_len = int(rng.integers(len_range[0], len_range[1], 1)[0])
        frames = 0.1 * rng.normals(t_len * width).reshape(t_len, width)
        if learnable:
            frames[:, :6] += targets[i]
        seqs.append(frames)
    return SequenceDataset(
        sample_ids=[f"r{i:04d}" for i in range(n)],
        sequences=seqs,
        targets=targets,
    )


@pytest.fixture
def tiny_model():
    config = tiny_config()
    params = init_params(config, Rng(7))
    return config, params
