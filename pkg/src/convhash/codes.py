"""Effective-sets, Bloom-filter conv-codes, min-hashes and Jaccard similarity.

A convex code ``y`` is summarised by its *effective-set*: the indices of its
``Z`` largest-magnitude coefficients. The set is written into a fixed-width
bit string (a conv-code) with a small Bloom filter, so that set overlap can
be measured with word-level AND/OR and popcount. Conv-codes are stored as
little-endian ``uint64`` words; bit ``p`` lives in word ``p // 64`` at
position ``p % 64``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np

from ._validation import is_power_of_two
from .exceptions import DataError
from .hashing import murmur3_64, spooky_hash64

ZERO_THRESHOLD = 1e-12
DEFAULT_Z = 4
DEFAULT_BITS = 1024

MURMUR3 = 1
SPOOKY = 2
HASH_ALGORITHMS = {MURMUR3: murmur3_64, SPOOKY: spooky_hash64}
DEFAULT_HASH_FAMILY = ((MURMUR3, 0x2545F4914F6CDD1D), (SPOOKY, 0x9E3779B97F4A7C15))


@dataclass(frozen=True)
class EffectiveSet:
    indices: frozenset
    Z: int

    def __post_init__(self):
        object.__setattr__(self, "indices", frozenset(int(i) for i in self.indices))
        if len(self.indices) > self.Z:
            raise ValueError(f"effective-set has {len(self.indices)} elements, more than Z={self.Z}")
        if any(i < 0 for i in self.indices):
            raise ValueError("effective-set indices must be non-negative")

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(sorted(self.indices))

    def __contains__(self, item):
        return item in self.indices


@dataclass(frozen=True)
class BloomConfig:
    """Code width and the ordered hash family ``((algorithm_id, seed), ...)``."""

    bits: int = DEFAULT_BITS
    hash_family: tuple = DEFAULT_HASH_FAMILY

    def __post_init__(self):
        family = tuple((int(a), int(s)) for a, s in self.hash_family)
        object.__setattr__(self, "hash_family", family)
        if not is_power_of_two(self.bits) or self.bits < 64:
            raise ValueError(f"bits must be a power of two >= 64, got {self.bits}")
        if not family:
            raise ValueError("hash family must contain at least one function")
        if len(set(family)) != len(family):
            raise ValueError("hash functions must be pairwise distinct (algorithm, seed)")
        for alg, seed in family:
            if alg not in HASH_ALGORITHMS:
                raise ValueError(f"unknown hash algorithm id {alg}")
            if not 0 <= seed < 2**64:
                raise ValueError("hash seeds must be unsigned 64-bit integers")

    @property
    def n_words(self) -> int:
        return self.bits // 64

    def positions(self, element: int) -> tuple[int, ...]:
        """Bit positions set for ``element``, one per hash function."""
        return _positions(self.bits, self.hash_family, int(element))

    def position_table(self, n: int) -> np.ndarray:
        """``(n, n_hash)`` array of bit positions for elements ``0..n-1``."""
        return _position_table(self.bits, self.hash_family, int(n))


@lru_cache(maxsize=None)
def _positions(bits: int, family: tuple, element: int) -> tuple[int, ...]:
    key = int(element).to_bytes(4, "little")
    mask = bits - 1
    return tuple(HASH_ALGORITHMS[alg](key, seed) & mask for alg, seed in family)


@lru_cache(maxsize=16)
def _position_table(bits: int, family: tuple, n: int) -> np.ndarray:
    table = np.array([_positions(bits, family, e) for e in range(n)], dtype=np.int64).reshape(n, len(family))
    table.flags.writeable = False
    return table


class ConvCode:
    """Fixed-width bit string, held as ``uint64`` words."""

    __slots__ = ("words",)

    def __init__(self, words):
        words = np.array(words, dtype="<u8").ravel()
        words.flags.writeable = False
        self.words = words

    @classmethod
    def zeros(cls, bits: int) -> "ConvCode":
        return cls(np.zeros(bits // 64, dtype=np.uint64))

    @classmethod
    def from_positions(cls, positions: Iterable[int], bits: int) -> "ConvCode":
        words = np.zeros(bits // 64, dtype=np.uint64)
        for p in positions:
            words[p >> 6] |= np.uint64(1) << np.uint64(p & 63)
        return cls(words)

    @classmethod
    def from_bytes(cls, data: bytes, bits: int) -> "ConvCode":
        if len(data) != bits // 8:
            raise ValueError(f"expected {bits // 8} bytes for a {bits}-bit code, got {len(data)}")
        return cls(np.frombuffer(data, dtype="<u8"))

    @property
    def width(self) -> int:
        return 64 * self.words.size

    def to_bytes(self) -> bytes:
        return self.words.astype("<u8").tobytes()

    def popcount(self) -> int:
        return int(np.bitwise_count(self.words).sum())

    def bit(self, p: int) -> bool:
        return bool((int(self.words[p >> 6]) >> (p & 63)) & 1)

    def set_bits(self) -> list[int]:
        return [p for p in range(self.width) if self.bit(p)]

    def __eq__(self, other):
        if not isinstance(other, ConvCode):
            return NotImplemented
        return self.width == other.width and bool(np.array_equal(self.words, other.words))

    def __hash__(self):
        return hash(self.to_bytes())

    def __repr__(self):
        return f"ConvCode(width={self.width}, popcount={self.popcount()})"


@dataclass(frozen=True)
class MinHashPermutation:
    """A bijection on ``[0, qd)`` regenerable from ``(seed, qd)``.

    ``perm`` may be given explicitly (for instance in tests); it is then not
    tied to ``seed`` and cannot be persisted.
    """

    seed: int
    qd: int
    perm: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.qd < 1:
            raise ValueError("qd must be positive")
        if self.perm is None:
            perm = np.random.default_rng(self.seed).permutation(self.qd)
        else:
            perm = np.asarray(self.perm, dtype=np.int64)
            if perm.shape != (self.qd,) or not np.array_equal(np.sort(perm), np.arange(self.qd)):
                raise ValueError("perm is not a permutation of [0, qd)")
        perm = perm.astype(np.int64)
        perm.flags.writeable = False
        object.__setattr__(self, "perm", perm)

    def __call__(self, i):
        return self.perm[i]


def effective_set(y, Z: int = DEFAULT_Z) -> EffectiveSet:
    """Indices of the ``Z`` largest ``|y_i|``, ties to the lower index.

    Coefficients at or below ``ZERO_THRESHOLD`` never enter the set.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    if Z < 1:
        raise ValueError("Z must be >= 1")
    if Z > y.size:
        raise DataError(f"Z exceeds dictionary size ({Z} > {y.size})")
    return EffectiveSet(frozenset(_top_indices(y[None, :], Z)[0].tolist()) - {-1}, Z)


def _top_indices(Y: np.ndarray, Z: int) -> np.ndarray:
    """Row-wise top-``Z`` indices of ``|Y|``; -1 pads rows with short support."""
    A = np.abs(Y)
    order = np.argsort(-A, axis=1, kind="stable")[:, :Z]
    vals = np.take_along_axis(A, order, axis=1)
    return np.where(vals > ZERO_THRESHOLD, order, -1)


def effective_sets_batch(Y, Z: int = DEFAULT_Z) -> np.ndarray:
    """Effective-sets of the rows of ``Y`` as an ``(n, Z)`` index array (-1 = absent)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if Z > Y.shape[1]:
        raise DataError(f"Z exceeds dictionary size ({Z} > {Y.shape[1]})")
    return _top_indices(Y, Z)


def bloom_encode(es: EffectiveSet | Iterable[int], cfg: BloomConfig = BloomConfig()) -> ConvCode:
    positions = [p for e in es for p in cfg.positions(e)]
    return ConvCode.from_positions(positions, cfg.bits)


def bloom_encode_batch(index_sets: np.ndarray, cfg: BloomConfig, qd: int) -> np.ndarray:
    """Encode ``(n, Z)`` index rows (as from :func:`effective_sets_batch`) into words."""
    index_sets = np.atleast_2d(index_sets)
    n = index_sets.shape[0]
    words = np.zeros((n, cfg.n_words), dtype=np.uint64)
    table = cfg.position_table(qd)
    rows, cols = np.nonzero(index_sets >= 0)
    pos = table[index_sets[rows, cols]]  # (k, n_hash)
    r = np.repeat(rows, pos.shape[1])
    p = pos.ravel()
    np.bitwise_or.at(words, (r, p >> 6), np.left_shift(np.uint64(1), (p & 63).astype(np.uint64)))
    return words


def bloom_contains(code: ConvCode, element: int, cfg: BloomConfig) -> bool:
    """Bloom membership query: False means ``element`` is certainly absent."""
    return all(code.bit(p) for p in cfg.positions(element))


def jaccard_sets(a, b) -> float:
    a = set(a)
    b = set(b)
    union = len(a | b)
    if union == 0:
        return 1.0
    return len(a & b) / union


def jaccard_bits(a: ConvCode, b: ConvCode) -> float:
    if a.width != b.width:
        raise DataError(f"incompatible code widths ({a.width} vs {b.width})")
    inter = int(np.bitwise_count(a.words & b.words).sum())
    union = int(np.bitwise_count(a.words | b.words).sum())
    if union == 0:
        return 1.0
    return inter / union


def jaccard_bits_matrix(A: np.ndarray, B: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Pairwise bit-Jaccard between word rows of ``A`` (n, w) and ``B`` (m, w)."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if A.shape[1] != B.shape[1]:
        raise DataError(f"incompatible code widths ({64 * A.shape[1]} vs {64 * B.shape[1]})")
    pa = np.bitwise_count(A).sum(axis=1, dtype=np.int64)
    pb = np.bitwise_count(B).sum(axis=1, dtype=np.int64)
    out = np.empty((A.shape[0], B.shape[0]), dtype=np.float64)
    for s in range(0, A.shape[0], chunk):
        inter = np.bitwise_count(A[s:s + chunk, None, :] & B[None, :, :]).sum(axis=2, dtype=np.int64)
        union = pa[s:s + chunk, None] + pb[None, :] - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            out[s:s + chunk] = np.where(union == 0, 1.0, inter / np.maximum(union, 1))
    return out


def min_hash(y, perm: MinHashPermutation, Z: int = DEFAULT_Z) -> int:
    """Smallest permuted index over the effective-set of ``y``."""
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != perm.qd:
        raise DataError(f"permutation is defined on {perm.qd} indices, code has {y.size}")
    es = effective_set(y, Z)
    return min_hash_of_set(es, perm)


def min_hash_of_set(es, perm: MinHashPermutation) -> int:
    idx = list(es)
    if not idx:
        raise DataError("no support to hash")
    return int(perm.perm[idx].min())


def min_hash_batch(index_sets: np.ndarray, perm: MinHashPermutation) -> np.ndarray:
    """Min-hashes of ``(n, Z)`` index rows; -1 where a row is empty."""
    index_sets = np.atleast_2d(index_sets)
    permuted = np.where(index_sets >= 0, perm.perm[np.maximum(index_sets, 0)], perm.qd)
    mh = permuted.min(axis=1)
    return np.where(mh == perm.qd, -1, mh)
