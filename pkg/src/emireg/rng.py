"""Deterministic pseudo-random number generation.

All randomness in this package flows through :class:`Rng`, a SplitMix64
generator. It is defined by its update equations rather than by any
platform default so that identical seeds produce bit-identical streams
on every OS, CPU, and interpreter version:

    state   <- (state + 0x9E3779B97F4A7C15)  mod 2^64
    z       <- state
    z       <- ((z XOR (z >> 30)) * 0xBF58476D1CE4E5B9)  mod 2^64
    z       <- ((z XOR (z >> 27)) * 0x94D049BB133111EB)  mod 2^64
    output  <- z XOR (z >> 31)

Because the i-th output is a pure function of ``seed + i * GAMMA``, whole
blocks of the stream can be produced vectorized in numpy while staying
identical to scalar generation.

Derived quantities are built only from this stream:

* uniforms in [0, 1) take the top 53 bits: ``(out >> 11) * 2^-53``
* normals use the Box-Muller transform on consecutive uniform pairs
* gamma variates use the Marsaglia-Tsang squeeze method
* beta variates are ``X / (X + Y)`` with gamma-distributed X, Y
* permutations sort uniform keys with a stable sort
"""

from __future__ import annotations

import math

import numpy as np

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_U64_MASK = (1 << 64) - 1
_INV_2_53 = float(2.0**-53)


def _mix_scalar(x: int) -> int:
    z = x & _U64_MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _U64_MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _U64_MASK
    return z ^ (z >> 31)


def _mix_block(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on an array of uint64 counters (wraps mod 2^64)."""
    z = x.copy()
    z ^= z >> np.uint64(30)
    z *= np.uint64(_MIX1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_MIX2)
    z ^= z >> np.uint64(31)
    return z


class Rng:
    """SplitMix64 stream with deterministic scalar and block output.

    Consuming n draws via a vectorized method advances the state exactly
    as n scalar draws would, so interleaving scalar and block calls is
    well defined. An instance is single-consumer: share values, not the
    generator, across threads.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _U64_MASK
        self._state = self.seed
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _U64_MASK
        return _mix_scalar(self._state)

    def u64_block(self, n: int) -> np.ndarray:
        """Next n raw outputs as a uint64 array."""
        if n < 0:
            raise ValueError(f"block size must be >= 0, got {n}")
        steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GAMMA)
        steps += np.uint64(self._state)
        out = _mix_block(steps)
        self._state = (self._state + n * _GAMMA) & _U64_MASK
        return out

    def uniform(self) -> float:
        """One double in [0, 1)."""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniforms(self, n: int) -> np.ndarray:
        """n doubles in [0, 1)."""
        return (self.u64_block(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def normal(self) -> float:
        """One standard normal draw (Box-Muller, pair-buffered)."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        # u1 shifted into (0, 1] so log() is finite
        u1 = ((self.next_u64() >> 11) + 1) * _INV_2_53
        u2 = (self.next_u64() >> 11) * _INV_2_53
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare_normal = r * math.sin(theta)
        return r * math.cos(theta)

    def normals(self, n: int) -> np.ndarray:
        """n standard normal draws, vectorized Box-Muller.

        Consumes 2*ceil(n/2) raw outputs; does not touch the scalar
        spare buffer.
        """
        pairs = (n + 1) // 2
        raw = self.u64_block(2 * pairs)
        u1 = ((raw[0::2] >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _INV_2_53
        u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def integers(self, lo: int, hi: int, n: int) -> np.ndarray:
        """n integers uniform on [lo, hi] inclusive."""
        if hi < lo:
            raise ValueError(f"empty integer range [{lo}, {hi}]")
        span = hi - lo + 1
        return lo + np.minimum((self.uniforms(n) * span).astype(np.int64), span - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Permutation of range(n) by stable-sorting uniform keys."""
        return np.argsort(self.uniforms(n), kind="stable")

    def gamma(self, shape: float) -> float:
        """One Gamma(shape, 1) draw, Marsaglia-Tsang method.

        For shape < 1 draws Gamma(shape + 1) and applies the boost
        g * U^(1/shape).
        """
        if shape <= 0:
            raise ValueError(f"gamma shape must be > 0, got {shape}")
        if shape < 1.0:
            u = ((self.next_u64() >> 11) + 1) * _INV_2_53
            return self.gamma(shape + 1.0) * u ** (1.0 / shape)
        d = shape - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            x = self.normal()
            v = 1.0 + c * x
            if v <= 0.0:
                continue
            v = v * v * v
            u = self.uniform()
            if u < 1.0 - 0.0331 * x * x * x * x:
                return d * v
            if u > 0.0 and math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
                return d * v

    def beta(self, a: float, b: float) -> float:
        """One Beta(a, b) draw via two gamma draws."""
        x = self.gamma(a)
        y = self.gamma(b)
        return x / (x + y)
