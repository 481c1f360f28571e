"""Deterministic seed derivation.

Every stage of the pipeline owns a 64-bit seed; sub-tasks (a batch index,
a slice index, a per-negative corruption) derive their own seeds from it
with a splitmix64 mix so that streams never collide and runs replay
bit-for-bit.
"""

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> int:
    """One splitmix64 output step for a 64-bit state."""
    z = (state + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(seed: int, *salts: int) -> int:
    """Mix ``seed`` with one or more integer salts into a fresh 64-bit seed."""
    s = seed & _MASK64
    for salt in salts:
        s = splitmix64(s ^ (splitmix64(salt & _MASK64)))
    return s
