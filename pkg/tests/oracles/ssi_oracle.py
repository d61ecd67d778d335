"""Session-identifier oracle: plain hashlib over the 13-byte input.

Frozen before the package existed; the constants below are its output.
"""

import hashlib

GOLDEN_ZERO = 0xA2D9  # isn=0, hck=0, ows=15
GOLDEN_ZERO_DIGEST = "a2d9ece58ffd5577a0f55d41c029bd27f9ca257b"
# isn=879, hck=0: ows 3 and 5 share the identifier 0x40f9
COLLIDING = (879, 0, (3, 5), 0x40F9)


def ssi(isn, hck, ows, digest="sha1"):
    data = isn.to_bytes(4, "big") + hck.to_bytes(8, "big") + bytes([ows])
    return int.from_bytes(hashlib.new(digest, data).digest()[:2], "big")
