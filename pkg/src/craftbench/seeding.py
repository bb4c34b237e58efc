"""Deterministic seed derivation.

All sampling in the package flows from 64-bit seeds. Child seeds are derived
with splitmix64 so that streams indexed by (env, episode, ...) are stable
across platforms and never depend on Python's salted hash().
"""

import hashlib

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def mix_seeds(*parts: int) -> int:
    """Fold integer parts into one 64-bit seed, order-sensitive."""
    h = 0x51_7C_C1_B7_27_22_0A_95
    for p in parts:
        h = splitmix64(h ^ (p & _MASK64))
    return h


def string_seed(text: str) -> int:
    """Stable 64-bit seed for a string (sha256 based, platform independent)."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class SplitmixRng:
    """Tiny deterministic RNG for hot sampling paths.

    Pure 64-bit integer arithmetic: identical streams on every platform and
    Python version, and much cheaper to construct than random.Random. The
    modulo bias of randrange is below n / 2^64 and irrelevant here.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
        return z ^ (z >> 31)

    def randrange(self, n: int) -> int:
        return self.next64() % n

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.next64() % (i + 1)
            items[i], items[j] = items[j], items[i]
