"""SplitMix64: a small, fully specified 64-bit generator.

Update:  state <- state + 0x9E3779B97F4A7C15 (mod 2**64)
Output:  z = state
         z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
         z = (z ^ (z >> 27)) * 0x94D049BB133111EB
         z ^ (z >> 31)
Uniform: (z >> 11) * 2**-53, in [0, 1).

Per-trial streams: `derive(seed, k1, k2, ...)` folds each key in as
s <- first output of SplitMix64(s ^ k), starting from s = seed.
"""

from __future__ import annotations

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & MASK

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK
        return _mix(self.state)

    def random(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    @classmethod
    def derive(cls, seed: int, *keys: int) -> "SplitMix64":
        state = int(seed) & MASK
        for k in keys:
            state = cls(state ^ (int(k) & MASK)).next_u64()
        return cls(state)
