"""Deterministic elementary math: stable softmax/sigmoid and a seeded RNG.

All randomness in the package flows through :class:`RngStream`, a counter-based
splitmix64 generator.  The recurrence is fixed and written out below so that a
run is reproducible bit-for-bit from its seed on any machine:

    state_k = (seed + (k + 1) * 0x9E3779B97F4A7C15) mod 2^64      (k = 0, 1, ...)
    output_k = mix(state_k)

    mix(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9   (mod 2^64)
            z ^= z >> 27; z *= 0x94D049BB133111EB   (mod 2^64)
            return z ^ (z >> 31)

Uniform doubles take the top 53 bits of an output: u = (out >> 11) * 2^-53,
so the integer and uniform streams are bit-portable.  Gaussian draws use
Box-Muller on two consecutive outputs (cosine branch only):

    u1 = ((out_a >> 11) + 1) * 2^-53     in (0, 1]
    u2 = (out_b >> 11) * 2^-53           in [0, 1)
    g  = sqrt(-2 ln u1) * cos(2 pi u2)

so each Gaussian consumes exactly two outputs, in order.  Test vectors live in
the README and in tests/test_numerics.py.
"""

from __future__ import annotations

import numpy as np

from .errors import UsageError

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

_U64 = np.uint64
_TWO_NEG_53 = 2.0 ** -53


def _mix64(z: int) -> int:
    """splitmix64 finalizer on plain Python ints (masked 64-bit arithmetic)."""
    z = ((z ^ (z >> 30)) * _MIX_A) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & _MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # uint64 array ops wrap mod 2^64, which is exactly what the recurrence wants
    z = (z ^ (z >> _U64(30))) * _U64(_MIX_A)
    z = (z ^ (z >> _U64(27))) * _U64(_MIX_B)
    return z ^ (z >> _U64(31))


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


class RngStream:
    """Seeded deterministic random stream (counter-based splitmix64).

    One stream per logical task; streams are never shared between tasks.
    ``derive`` forks an independently seeded child stream from a string label,
    so unrelated consumers (model init, shuffling, noise, ...) cannot perturb
    each other's draw sequences.
    """

    def __init__(self, seed: int):
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise UsageError(f"seed must be an integer, got {type(seed).__name__}")
        if not 0 <= seed < (1 << 64):
            raise UsageError(f"seed must be in [0, 2^64), got {seed}")
        self.seed = seed
        self._counter = 0

    def derive(self, label: str) -> "RngStream":
        """Child stream keyed by a label; independent of this stream's position."""
        return RngStream(_mix64(self.seed ^ _fnv1a64(label.encode("utf-8"))))

    def u64_block(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs as a uint64 array."""
        ks = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        state = _U64(self.seed) + ks * _U64(_GAMMA)
        return _mix64_array(state)

    def next_u64(self) -> int:
        return int(self.u64_block(1)[0])

    def doubles(self, n: int) -> np.ndarray:
        """``n`` uniforms in [0, 1), 53-bit resolution."""
        return (self.u64_block(n) >> _U64(11)).astype(np.float64) * _TWO_NEG_53

    def next_double(self) -> float:
        return float(self.doubles(1)[0])

    def gaussians(self, n: int) -> np.ndarray:
        """``n`` standard normal variates via Box-Muller (cosine branch)."""
        raw = self.u64_block(2 * n)
        u1 = ((raw[0::2] >> _U64(11)).astype(np.float64) + 1.0) * _TWO_NEG_53
        u2 = (raw[1::2] >> _U64(11)).astype(np.float64) * _TWO_NEG_53
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def next_gaussian(self) -> float:
        return float(self.gaussians(1)[0])

    def next_int(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], both ends inclusive."""
        if lo > hi:
            raise UsageError(f"next_int: empty range [{lo}, {hi}]")
        return lo + int(self.next_double() * (hi - lo + 1))

    def next_index(self, probs: np.ndarray) -> int:
        """Sample an index from a probability vector."""
        cum = np.cumsum(np.asarray(probs, dtype=np.float64))
        u = self.next_double() * cum[-1]
        return int(min(np.searchsorted(cum, u, side="right"), len(cum) - 1))

    def permutation(self, n: int) -> np.ndarray:
        """Uniform permutation of range(n) (argsort of n uniform keys)."""
        return np.argsort(self.doubles(n), kind="stable")


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along ``axis`` (max-shifted).

    Non-finite or empty input is a precondition violation, not a silent clamp.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise UsageError("softmax: empty input")
    if not np.all(np.isfinite(x)):
        raise UsageError("softmax: input contains non-finite values")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=axis, keepdims=True)


def sigmoid(x):
    """Logistic function, overflow-safe for any finite argument."""
    scalar = np.ndim(x) == 0
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out[0]) if scalar else out
