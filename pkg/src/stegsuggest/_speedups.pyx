# cython: language_level=3
"""Compiled versions of the kernels in ``_purecore``.

SHA-1 goes straight to libcrypto's one-shot EVP digest; other digests are
served by the Python path (see ``kernels.ssi_candidates``).
"""

from libc.stdint cimport uint32_t, uint64_t


cdef extern from "openssl/evp.h":
    ctypedef struct EVP_MD:
        pass
    ctypedef struct ENGINE:
        pass
    const EVP_MD *EVP_sha1()
    int EVP_Digest(const void *data, size_t count, unsigned char *md,
                   unsigned int *size, const EVP_MD *type, ENGINE *impl) nogil


cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t _mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def splitmix64_at(seed, counter):
    cdef uint64_t s = <uint64_t>(seed & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t c = <uint64_t>counter
    return _mix64(s + (c + 1) * GAMMA)


def keyed_permutation(seed, Py_ssize_t n, counter=0):
    cdef uint64_t s = <uint64_t>(seed & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t c = <uint64_t>counter
    cdef uint64_t bound, limit, x, j
    cdef Py_ssize_t i
    cdef list perm = list(range(n))
    for i in range(n - 1, 0, -1):
        bound = <uint64_t>(i + 1)
        # (2**64 // bound) * bound without 128-bit ints
        limit = 0xFFFFFFFFFFFFFFFFULL - (0xFFFFFFFFFFFFFFFFULL % bound + 1) % bound + 1
        while True:
            x = _mix64(s + (c + 1) * GAMMA)
            c += 1
            if limit == 0 or x < limit:
                break
        j = x % bound
        perm[i], perm[j] = perm[j], perm[i]
    return perm, c


def ssi_candidates_sha1(isn, hck):
    cdef unsigned char buf[13]
    cdef unsigned char md[64]
    cdef unsigned int mdlen = 0
    cdef uint32_t v32 = <uint32_t>(isn & 0xFFFFFFFF)
    cdef uint64_t v64 = <uint64_t>(hck & 0xFFFFFFFFFFFFFFFF)
    cdef int k, ows
    cdef const EVP_MD *md_type = EVP_sha1()
    for k in range(4):
        buf[k] = (v32 >> (8 * (3 - k))) & 0xFF
    for k in range(8):
        buf[4 + k] = (v64 >> (8 * (7 - k))) & 0xFF
    out = [0] * 16
    for ows in range(16):
        buf[12] = ows
        if EVP_Digest(buf, 13, md, &mdlen, md_type, NULL) != 1:
            raise RuntimeError("EVP_Digest failed")
        out[ows] = (md[0] << 8) | md[1]
    return out


def ts_rewrite_run(origs, steg_start=None):
    cdef Py_ssize_t n = len(origs), k
    cdef uint32_t steg, prev, cur
    if n == 0:
        return []
    prev = <uint32_t>(origs[0] & 0xFFFFFFFF)
    steg = prev if steg_start is None else <uint32_t>(steg_start & 0xFFFFFFFF)
    out = [0] * n
    out[0] = steg
    for k in range(1, n):
        cur = <uint32_t>(origs[k] & 0xFFFFFFFF)
        steg = steg + (cur - prev)
        out[k] = steg
        prev = cur
    return out
