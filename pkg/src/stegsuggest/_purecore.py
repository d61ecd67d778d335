"""Pure Python kernels.

Reference implementations of the routines that ``_speedups.pyx`` compiles.
Both backends must agree bit for bit; ``tests/test_kernels.py`` checks that.

Generator
---------
Keyed permutations use SplitMix64 in its counter form: draw ``i`` (counting
from 0) is ``mix64(seed + (i + 1) * GAMMA mod 2**64)``. Bounded draws in
``[0, n)`` reject raw values ``>= (2**64 // n) * n`` and take the remainder of
the next accepted one, so they are exactly uniform on every platform.
"""

from __future__ import annotations

import hashlib

MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF
GAMMA = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix64_at(seed: int, counter: int) -> int:
    """Return draw number ``counter`` of the stream keyed by ``seed``."""
    return mix64((seed + (counter + 1) * GAMMA) & MASK64)


def keyed_permutation(seed: int, n: int, counter: int = 0) -> tuple[list[int], int]:
    """Fisher-Yates shuffle of ``range(n)`` driven by the keyed stream.

    For ``i`` from ``n - 1`` down to 1 a bounded draw ``j`` in ``[0, i]`` is
    taken and positions ``i`` and ``j`` swapped. Returns the permutation and
    the stream counter after the last draw, so several permutations can be
    chained off one key.
    """
    seed &= MASK64
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        bound = i + 1
        limit = ((1 << 64) // bound) * bound
        while True:
            x = splitmix64_at(seed, counter)
            counter += 1
            if x < limit:
                break
        j = x % bound
        perm[i], perm[j] = perm[j], perm[i]
    return perm, counter


def ssi_candidates(isn: int, hck: int, digest: str = "sha1") -> list[int]:
    """16-bit session identifiers for every original WS value 0..15."""
    prefix = (isn & MASK32).to_bytes(4, "big") + (hck & MASK64).to_bytes(8, "big")
    out = []
    for ows in range(16):
        h = hashlib.new(digest, prefix + bytes((ows,))).digest()
        out.append((h[0] << 8) | h[1])
    return out


def ts_rewrite_run(origs: list[int], steg_start: int | None = None) -> list[int]:
    """Apply the timestamp rewrite rule over a whole to-server sequence.

    ``steg[k] = steg[k-1] + (orig[k] - orig[k-1])`` in 32-bit arithmetic; the
    first rewritten value is ``steg_start`` (identity start when omitted).
    """
    if not origs:
        return []
    steg = (origs[0] if steg_start is None else steg_start) & MASK32
    out = [steg]
    prev = origs[0]
    for cur in origs[1:]:
        steg = (steg + (cur - prev)) & MASK32
        out.append(steg)
        prev = cur
    return out
