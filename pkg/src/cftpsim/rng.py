"""Deterministic counter-style random number generation.

The generator is SplitMix64: the internal state walks a Weyl sequence
(increment ``GOLDEN`` per draw) and every output is a 64-bit hash of the
state, i.e. effectively a hashed counter.  This makes streams cheap to
derive, trivially reproducible, and platform independent (pure integer
arithmetic plus one exact power-of-two float scale).

Stream derivation rule (used for parallel replicas): replica ``r`` of a
run seeded with ``seed`` starts from

    state0 = mix64(mix64(seed) + r * GOLDEN)   (mod 2**64)

Uniform variates are drawn on [0, 1) with the full 53 bits of double
mantissa; uniform indices use rejection sampling so they are exactly
uniform on {0, ..., m-1}.

The numerically identical compiled twins of these routines live in
``cftpsim._kernels``; ``tests/test_rng.py`` pins the bit-level parity.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV53 = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 finalizer: a 64-bit avalanche hash."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def stream_state(seed: int, replica: int = 0) -> int:
    """Initial state of the stream for a given (seed, replica) pair."""
    return mix64((mix64(seed) + (replica & MASK64) * GOLDEN) & MASK64)


def next_u64(state: int) -> tuple[int, int]:
    """Advance the state and return (new_state, 64-bit output)."""
    state = (state + GOLDEN) & MASK64
    return state, mix64(state)


def next_uniform(state: int) -> tuple[int, float]:
    """Advance and return a uniform double on [0, 1) with 53-bit resolution."""
    state, z = next_u64(state)
    return state, (z >> 11) * _INV53


def next_index(state: int, m: int) -> tuple[int, int]:
    """Advance and return an exactly uniform index in {0, ..., m-1}.

    Rejection on the top partial block of 2**64; the rejection
    probability is below m / 2**64.
    """
    rem = (MASK64 % m + 1) % m  # 2**64 mod m
    lim = MASK64 - rem
    while True:
        state, z = next_u64(state)
        if z <= lim:
            return state, z % m


class RandomStream:
    """Stateful convenience wrapper around the stream functions."""

    __slots__ = ("state",)

    def __init__(self, seed: int, replica: int = 0):
        self.state = stream_state(seed, replica)

    def u64(self) -> int:
        self.state, z = next_u64(self.state)
        return z

    def uniform(self) -> float:
        self.state, u = next_uniform(self.state)
        return u

    def index(self, m: int) -> int:
        self.state, e = next_index(self.state, m)
        return e
