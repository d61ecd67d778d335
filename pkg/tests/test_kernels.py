import random

import pytest

from stegsuggest import _purecore, kernels

try:
    from stegsuggest import _speedups
except ImportError:  # extension not built
    _speedups = None

needs_ext = pytest.mark.skipif(_speedups is None, reason="compiled extension not available")


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")


def test_splitmix_reference_values():
    # first outputs of SplitMix64 seeded with 0
    assert _purecore.splitmix64_at(0, 0) == 0xE220A8397B1DCDAF
    assert _purecore.splitmix64_at(0, 1) == 0x6E789E6AA1B965F4


def test_permutation_is_permutation():
    perm, counter = _purecore.keyed_permutation(42, 1024)
    assert sorted(perm) == list(range(1024))
    assert counter >= 1023


@needs_ext
@pytest.mark.parametrize("seed", [0, 1, 0x0123456789ABCDEF, 2**64 - 1])
def test_permutation_backends_agree(seed):
    a = _purecore.keyed_permutation(seed, 1024, 0)
    b = _speedups.keyed_permutation(seed, 1024, 0)
    assert list(a[0]) == list(b[0]) and a[1] == b[1]
    c = _purecore.keyed_permutation(seed, 1024, a[1])
    d = _speedups.keyed_permutation(seed, 1024, b[1])
    assert list(c[0]) == list(d[0])


@needs_ext
def test_ssi_backends_agree():
    rng = random.Random(5)
    for _ in range(200):
        isn, hck = rng.getrandbits(32), rng.getrandbits(64)
        assert list(_purecore.ssi_candidates(isn, hck)) == list(_speedups.ssi_candidates_sha1(isn, hck))


@needs_ext
def test_ts_rewrite_backends_agree():
    rng = random.Random(6)
    for _ in range(50):
        origs = [rng.getrandbits(32) for _ in range(rng.randint(1, 40))]
        start = rng.getrandbits(32)
        assert list(_purecore.ts_rewrite_run(origs, start)) == list(_speedups.ts_rewrite_run(origs, start))
        assert list(_purecore.ts_rewrite_run(origs)) == list(_speedups.ts_rewrite_run(origs))


def test_ssi_other_digest_uses_fallback():
    out = kernels.ssi_candidates(1, 2, "sha256")
    assert len(out) == 16 and out == _purecore.ssi_candidates(1, 2, "sha256")
