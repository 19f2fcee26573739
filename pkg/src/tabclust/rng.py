"""Deterministic, platform-independent random number generation.

The generator is counter based.  Draw number ``i`` (1-indexed) of a stream
seeded with ``s`` is ``mix64(s + i * GOLDEN) >> 11 / 2**53`` where ``mix64``
is the splitmix64 output permutation and ``GOLDEN`` is the 64-bit golden
ratio constant.  Because every draw depends only on ``(seed, counter)``,
blocks of draws vectorize as uint64 numpy arithmetic and two streams with
equal seeds are bit-identical on every platform, independent of numpy
version.  The exact constants and derived-stream rules are documented in
the README ("Determinism" section) and must not change within a release.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
# domain separator for spawn(), keeps child seeds off the draw counter path
SPAWN_SALT = 0x6A09E667F3BCC909

_U64 = np.uint64
_TWO_NEG53 = 2.0 ** -53


def _mix64_int(z: int) -> int:
    """splitmix64 finalizer on a python int (mod 2**64)."""
    z &= MASK64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return (z ^ (z >> 31)) & MASK64


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on a uint64 array (wraps mod 2**64)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
        return z ^ (z >> _U64(31))


class Rng:
    """Seeded deterministic generator; single-owner mutable (the counter)."""

    def __init__(self, seed: int):
        self._seed = int(seed) & MASK64
        self._counter = 0

    @property
    def seed(self) -> int:
        return self._seed

    def _raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs as a uint64 array."""
        start = self._counter + 1
        self._counter += n
        idx = np.arange(start, start + n, dtype=np.uint64)
        with np.errstate(over="ignore"):
            state = idx * _U64(GOLDEN) + _U64(self._seed)
        return _mix64_vec(state)

    def random(self, size=None):
        """Uniform float64 draws in [0, 1)."""
        if size is None:
            return float(self._raw(1)[0] >> _U64(11)) * _TWO_NEG53
        n = int(np.prod(size))
        out = (self._raw(n) >> _U64(11)).astype(np.float64) * _TWO_NEG53
        return out.reshape(size)

    def uniform(self, low: float, high: float, size=None):
        return low + (high - low) * self.random(size)

    def normal(self, size=None):
        """Standard normal draws via Box-Muller on uniform pairs."""
        n = 1 if size is None else int(np.prod(size))
        pairs = (n + 1) // 2
        raw = self._raw(2 * pairs)
        # u1 in (0, 1] so log() is finite; u2 in [0, 1)
        u1 = ((raw[:pairs] >> _U64(11)).astype(np.float64) + 1.0) * _TWO_NEG53
        u2 = (raw[pairs:] >> _U64(11)).astype(np.float64) * _TWO_NEG53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        if size is None:
            return float(out[0])
        return out[:n].reshape(size)

    def integers(self, bound: int, size=None):
        """Integer draws in [0, bound) as floor(random() * bound).

        The float path has bias ~2**-53 per draw; accepted for the sake of
        a simple fully-specified algorithm.
        """
        if bound < 1:
            raise ValueError("bound must be >= 1")
        if size is None:
            return min(int(self.random() * bound), bound - 1)
        draws = np.minimum((self.random(size) * bound).astype(np.int64), bound - 1)
        return draws

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n, dtype=np.int64)
        if n < 2:
            return perm
        draws = self.random(n - 1)
        for pos, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(draws[pos] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def derive_seed(self, *keys) -> int:
        """Seed of the child stream identified by ``keys``.

        Keys are ints or strings (strings fold to 64-bit ints first, see
        ``_key_int``).  Independent of the draw counter: spawning is a
        pure function of (seed, keys).
        """
        s = _mix64_int(self._seed ^ SPAWN_SALT)
        for k in keys:
            s = _mix64_int((s + (_key_int(k) + 1) * GOLDEN) & MASK64)
        return s

    def spawn(self, *keys) -> "Rng":
        """Independent child stream for the given key path."""
        return Rng(self.derive_seed(*keys))


def _key_int(key) -> int:
    """Map a stream key onto the 64-bit key domain.

    Ints pass through masked; strings fold their UTF-8 bytes (length
    first, then 8-byte little-endian chunks) through the same mixer, so
    the mapping is stable across runs and platforms.
    """
    if isinstance(key, (int, np.integer)):
        return int(key) & MASK64
    if isinstance(key, str):
        data = key.encode("utf-8")
        s = _mix64_int(((len(data) + 1) * GOLDEN) & MASK64)
        for i in range(0, len(data), 8):
            chunk = int.from_bytes(data[i : i + 8], "little")
            s = _mix64_int(s ^ chunk)
        return s
    raise TypeError(f"rng keys must be int or str, got {type(key).__name__}")
