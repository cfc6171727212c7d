"""Pure-Python MurmurHash3 (x64, 128-bit) and SpookyHash V2.

Both follow the public reference C++ implementations. They are used to
place archetype indices into Bloom filters, where inputs are tiny (4 bytes)
and the results are cached, so no attempt is made at speed.
"""

from __future__ import annotations

import struct

MASK64 = 0xFFFFFFFFFFFFFFFF


def _rotl(x: int, r: int) -> int:
    return ((x << r) | (x >> (64 - r))) & MASK64


def _fmix64(k: int) -> int:
    k ^= k >> 33
    k = (k * 0xFF51AFD7ED558CCD) & MASK64
    k ^= k >> 33
    k = (k * 0xC4CEB9FE1A85EC53) & MASK64
    k ^= k >> 33
    return k


_C1 = 0x87C37B91114253D5
_C2 = 0x4CF5AD432745937F


def murmur3_x64_128(data: bytes, seed: int = 0) -> tuple[int, int]:
    """MurmurHash3_x64_128 returning ``(h1, h2)`` as unsigned 64-bit ints.

    The reference takes a 32-bit seed; here the seed may use all 64 bits and
    results coincide with the reference whenever ``seed < 2**32``.
    """
    data = bytes(data)
    length = len(data)
    h1 = h2 = seed & MASK64
    nblocks = length // 16

    for i in range(nblocks):
        k1, k2 = struct.unpack_from("<QQ", data, i * 16)
        k1 = (k1 * _C1) & MASK64
        k1 = _rotl(k1, 31)
        k1 = (k1 * _C2) & MASK64
        h1 ^= k1
        h1 = _rotl(h1, 27)
        h1 = (h1 + h2) & MASK64
        h1 = (h1 * 5 + 0x52DCE729) & MASK64

        k2 = (k2 * _C2) & MASK64
        k2 = _rotl(k2, 33)
        k2 = (k2 * _C1) & MASK64
        h2 ^= k2
        h2 = _rotl(h2, 31)
        h2 = (h2 + h1) & MASK64
        h2 = (h2 * 5 + 0x38495AB5) & MASK64

    tail = data[nblocks * 16:]
    rem = len(tail)
    if rem > 8:
        k2 = int.from_bytes(tail[8:], "little")
        k2 = (k2 * _C2) & MASK64
        k2 = _rotl(k2, 33)
        k2 = (k2 * _C1) & MASK64
        h2 ^= k2
    if rem > 0:
        k1 = int.from_bytes(tail[:8], "little")
        k1 = (k1 * _C1) & MASK64
        k1 = _rotl(k1, 31)
        k1 = (k1 * _C2) & MASK64
        h1 ^= k1

    h1 ^= length
    h2 ^= length
    h1 = (h1 + h2) & MASK64
    h2 = (h2 + h1) & MASK64
    h1 = _fmix64(h1)
    h2 = _fmix64(h2)
    h1 = (h1 + h2) & MASK64
    h2 = (h2 + h1) & MASK64
    return h1, h2


def murmur3_64(data: bytes, seed: int = 0) -> int:
    """Low 64 bits of :func:`murmur3_x64_128`."""
    return murmur3_x64_128(data, seed)[0]


# SpookyHash V2 ----------------------------------------------------------

_SC_CONST = 0xDEADBEEFDEADBEEF
_SC_NUMVARS = 12
_SC_BLOCKSIZE = _SC_NUMVARS * 8
_SC_BUFSIZE = 2 * _SC_BLOCKSIZE

_SHORT_MIX_ROT = (50, 52, 30, 41, 54, 48, 38, 37, 62, 34, 5, 36)
_SHORT_END_ROT = (15, 52, 26, 51, 28, 9, 47, 54, 32, 25, 63)
_MIX_ROT = (11, 32, 43, 31, 17, 28, 39, 57, 55, 54, 22, 46)
_END_PARTIAL_ROT = (44, 15, 34, 21, 38, 33, 10, 13, 38, 53, 42, 54)


def _short_mix(h: list[int]) -> None:
    # h2 = rot(h2); h2 += h3; h0 ^= h2; then the same pattern shifted by one
    for step, r in enumerate(_SHORT_MIX_ROT):
        a = (step + 2) % 4
        b = (step + 3) % 4
        c = step % 4
        h[a] = _rotl(h[a], r)
        h[a] = (h[a] + h[b]) & MASK64
        h[c] ^= h[a]


def _short_end(h: list[int]) -> None:
    # h3 ^= h2; h2 = rot(h2); h3 += h2; then shifted by one
    for step, r in enumerate(_SHORT_END_ROT):
        x = (step + 3) % 4
        y = (step + 2) % 4
        h[x] ^= h[y]
        h[y] = _rotl(h[y], r)
        h[x] = (h[x] + h[y]) & MASK64


def _spooky_short(data: bytes, seed1: int, seed2: int) -> tuple[int, int]:
    length = len(data)
    remainder = length % 32
    h = [seed1, seed2, _SC_CONST, _SC_CONST]
    pos = 0

    if length > 15:
        for _ in range(length // 32):
            w = struct.unpack_from("<4Q", data, pos)
            h[2] = (h[2] + w[0]) & MASK64
            h[3] = (h[3] + w[1]) & MASK64
            _short_mix(h)
            h[0] = (h[0] + w[2]) & MASK64
            h[1] = (h[1] + w[3]) & MASK64
            pos += 32
        if remainder >= 16:
            w = struct.unpack_from("<2Q", data, pos)
            h[2] = (h[2] + w[0]) & MASK64
            h[3] = (h[3] + w[1]) & MASK64
            _short_mix(h)
            pos += 16
            remainder -= 16

    h[3] = (h[3] + (length << 56)) & MASK64
    tail = data[pos:pos + remainder]
    if remainder == 0:
        h[2] = (h[2] + _SC_CONST) & MASK64
        h[3] = (h[3] + _SC_CONST) & MASK64
    elif remainder >= 8:
        # first 8 bytes go to c, the rest (up to 7) to d, little-endian
        h[2] = (h[2] + int.from_bytes(tail[:8], "little")) & MASK64
        h[3] = (h[3] + int.from_bytes(tail[8:], "little")) & MASK64
    else:
        h[2] = (h[2] + int.from_bytes(tail, "little")) & MASK64

    _short_end(h)
    return h[0], h[1]


def _mix(data: tuple[int, ...], s: list[int]) -> None:
    for i, r in enumerate(_MIX_ROT):
        s[i] = (s[i] + data[i]) & MASK64
        s[(i + 2) % 12] ^= s[(i + 10) % 12]
        s[(i + 11) % 12] ^= s[i]
        s[i] = _rotl(s[i], r)
        s[(i + 11) % 12] = (s[(i + 11) % 12] + s[(i + 1) % 12]) & MASK64


def _end_partial(h: list[int]) -> None:
    for i, r in enumerate(_END_PARTIAL_ROT):
        a = (i + 11) % 12
        b = (i + 1) % 12
        c = (i + 2) % 12
        h[a] = (h[a] + h[b]) & MASK64
        h[c] ^= h[a]
        h[b] = _rotl(h[b], r)


def spooky_hash128(data: bytes, seed1: int = 0, seed2: int = 0) -> tuple[int, int]:
    """SpookyHash V2 128-bit hash, returned as ``(hash1, hash2)``."""
    data = bytes(data)
    length = len(data)
    if length < _SC_BUFSIZE:
        return _spooky_short(data, seed1 & MASK64, seed2 & MASK64)

    h = [seed1 & MASK64, seed2 & MASK64, _SC_CONST] * 4
    nblocks = length // _SC_BLOCKSIZE
    for i in range(nblocks):
        _mix(struct.unpack_from("<12Q", data, i * _SC_BLOCKSIZE), h)

    remainder = length - nblocks * _SC_BLOCKSIZE
    buf = bytearray(_SC_BLOCKSIZE)
    buf[:remainder] = data[nblocks * _SC_BLOCKSIZE:]
    buf[_SC_BLOCKSIZE - 1] = remainder

    words = struct.unpack("<12Q", bytes(buf))
    for i in range(_SC_NUMVARS):
        h[i] = (h[i] + words[i]) & MASK64
    for _ in range(3):
        _end_partial(h)
    return h[0], h[1]


def spooky_hash64(data: bytes, seed: int = 0) -> int:
    return spooky_hash128(data, seed, seed)[0]
