"""Seeded, reproducible sampling of indices proportional to squared norms.

The random stream is counter-based SplitMix64: deviate ``i`` (counting from 1)
is the SplitMix64 finalizer applied to ``seed + i*GOLDEN mod 2**64``.  Because
each deviate is a pure function of (seed, position), drawing one value at a
time and drawing a block with :meth:`Rng.random_array` produce bit-identical
streams, on every platform.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB


def _mix64(z: int) -> int:
    """SplitMix64 finalizer of a 64-bit integer (xor-shift-multiply, twice)."""
    z = ((z ^ (z >> 30)) * _MIX_A) & MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & MASK64
    return z ^ (z >> 31)


class Rng:
    """Deterministic uniform generator built from a 64-bit seed.

    One instance drives one solver run.  The position counter advances by one
    per deviate regardless of whether deviates are taken singly or in bulk.
    """

    __slots__ = ("seed", "_count")

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self._count = 0

    @property
    def position(self) -> int:
        """Number of deviates drawn so far."""
        return self._count

    def next_uint64(self) -> int:
        self._count += 1
        return _mix64((self.seed + self._count * _GOLDEN) & MASK64)

    def random(self) -> float:
        """Uniform float64 in [0, 1), using the top 53 bits of one deviate."""
        return (self.next_uint64() >> 11) * 2.0**-53

    def random_array(self, count: int) -> np.ndarray:
        """`count` uniforms in [0, 1); same stream as `count` calls to random()."""
        if count < 0:
            raise ValueError("count must be nonnegative")
        start = self._count + 1
        self._count += count
        with np.errstate(over="ignore"):
            idx = np.arange(start, start + count, dtype=np.uint64)
            z = np.uint64(self.seed) + idx * np.uint64(_GOLDEN)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_A)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_B)
            z = z ^ (z >> np.uint64(31))
        return (z >> np.uint64(11)) * 2.0**-53


def derive_trial_seed(base_seed: int, trial: int) -> int:
    """Mix a base seed with a trial index into an independent 64-bit seed.

    The scheme is ``mix64(mix64(base) XOR ((trial+1)*GOLDEN mod 2**64))``.
    It is stable (part of the file-format/reproducibility contract) and
    injective in practice: distinct (base, trial) pairs give distinct seeds
    for any realistic number of trials.
    """
    base = int(base_seed) & MASK64
    step = ((int(trial) + 1) * _GOLDEN) & MASK64
    return _mix64(_mix64(base) ^ step)


class IndexSampler:
    """Draws indices with probability weight[i]/total.

    Selection is a uniform draw in [0, total) followed by binary search over
    the cumulative weight table, so indices with zero weight are never
    returned and construction is a single pass.
    """

    __slots__ = ("cumulative", "total", "_size", "_last_positive")

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty 1-D vector")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0.0):
            raise ValueError("weights must be nonnegative")
        self.cumulative = np.cumsum(w)
        self.total = float(self.cumulative[-1])
        if self.total <= 0.0:
            raise ValueError("at least one weight must be positive")
        self._size = w.size
        self._last_positive = int(np.flatnonzero(w > 0.0)[-1])

    @property
    def size(self) -> int:
        return self._size

    def lookup(self, u: float) -> int:
        """Index whose cumulative interval contains ``u * total``, u in [0, 1)."""
        idx = int(np.searchsorted(self.cumulative, u * self.total, side="right"))
        # u*total can round up to the table end; clamp onto a positive weight.
        if idx >= self._size:
            idx = self._last_positive
        return idx

    def lookup_many(self, us: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.cumulative, us * self.total, side="right")
        return np.where(idx >= self._size, self._last_positive, idx)

    def draw(self, rng: Rng) -> int:
        return self.lookup(rng.random())

    def draw_many(self, rng: Rng, count: int) -> np.ndarray:
        return self.lookup_many(rng.random_array(count))


def build_sampler(weights) -> IndexSampler:
    """Build an :class:`IndexSampler` from a nonnegative weight vector."""
    return IndexSampler(weights)


def parse_seed(text: str) -> int:
    """Parse a 64-bit seed given as decimal or 0x-prefixed hex."""
    value = int(text, 0)
    if value < 0 or value > MASK64:
        raise ValueError(f"seed {text!r} does not fit in 64 bits")
    return value
