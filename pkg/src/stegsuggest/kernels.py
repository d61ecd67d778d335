"""Kernel dispatch: compiled extension when available, pure Python otherwise.

Set ``STEGSUGGEST_PURE=1`` in the environment to force the fallback.
``BACKEND`` names the active implementation.
"""

from __future__ import annotations

import os

from . import _purecore

__all__ = [
    "BACKEND",
    "keyed_permutation",
    "splitmix64_at",
    "ssi_candidates",
    "ts_rewrite_run",
]

_fast = None
if not os.environ.get("STEGSUGGEST_PURE"):
    try:
        from . import _speedups as _fast
    except ImportError:
        _fast = None

BACKEND = "cython" if _fast is not None else "python"

if _fast is not None:
    keyed_permutation = _fast.keyed_permutation
    splitmix64_at = _fast.splitmix64_at
    ts_rewrite_run = _fast.ts_rewrite_run

    def ssi_candidates(isn: int, hck: int, digest: str = "sha1") -> list[int]:
        if digest == "sha1":
            return _fast.ssi_candidates_sha1(isn, hck)
        return _purecore.ssi_candidates(isn, hck, digest)

else:
    keyed_permutation = _purecore.keyed_permutation
    splitmix64_at = _purecore.splitmix64_at
    ssi_candidates = _purecore.ssi_candidates
    ts_rewrite_run = _purecore.ts_rewrite_run
