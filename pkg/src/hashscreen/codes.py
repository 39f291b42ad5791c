"""Binary hash codes and the two similarity primitives everything builds on.

A code is d sign bits packed little-endian into ceil(d/64) 64-bit words:
bit ``i`` of word ``j`` holds dimension ``64*j + i``, bit 1 means +1 and
bit 0 means -1. Padding bits past d are always zero, so word-level XOR +
popcount never needs to special-case the tail (it is masked anyway,
defensively).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, InvalidInputError, ShapeError

WORD_BITS = 64

# Norms below this are treated as degenerate rather than silently mapped
# to similarity 0.
NORM_EPS = 1e-12


def words_for_bits(n_bits: int) -> int:
    if n_bits <= 0:
        raise InvalidInputError(f"code length must be positive, got {n_bits}")
    return (n_bits + WORD_BITS - 1) // WORD_BITS


def tail_mask(n_bits: int) -> np.uint64:
    """Mask selecting the valid bits of the final word."""
    used = n_bits % WORD_BITS
    if used == 0:
        return np.uint64(0xFFFFFFFFFFFFFFFF)
    return np.uint64((1 << used) - 1)


@dataclass(frozen=True, eq=False)
class BinaryCode:
    """A packed d-bit hash code. Immutable after construction."""

    words: np.ndarray = field(repr=False)
    n_bits: int = 0

    def __post_init__(self):
        words = np.asarray(self.words, dtype=np.uint64).ravel()
        words.setflags(write=False)
        object.__setattr__(self, "words", words)
        expected = words_for_bits(self.n_bits)
        if words.shape[0] != expected:
            raise InvalidInputError(
                f"{self.n_bits}-bit code needs {expected} words, got {words.shape[0]}"
            )
        if words[-1] & ~tail_mask(self.n_bits):
            raise InvalidInputError("padding bits beyond n_bits must be zero")

    def __eq__(self, other):
        return (
            isinstance(other, BinaryCode)
            and self.n_bits == other.n_bits
            and bool(np.array_equal(self.words, other.words))
        )

    def to_bytes(self) -> bytes:
        """Little-endian wire form, 8 bytes per word."""
        return np.asarray(self.words, dtype="<u8").tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes, n_bits: int) -> "BinaryCode":
        words = np.frombuffer(raw, dtype="<u8").astype(np.uint64)
        return cls(words, n_bits)


def _check_finite_vector(values: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{what} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise InvalidInputError(f"{what} has non-finite entry at index {bad}")
    return arr


def pack_sign_matrix(rows: np.ndarray) -> np.ndarray:
    """Pack an (n, d) real matrix into (n, ceil(d/64)) uint64 words by sign.

    Entry > 0 becomes bit 1, entry <= 0 becomes bit 0 (sign(0) maps to -1).
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {rows.shape}")
    if not np.all(np.isfinite(rows)):
        bad = np.argwhere(~np.isfinite(rows))[0]
        raise InvalidInputError(
            f"non-finite entry at row {int(bad[0])}, dim {int(bad[1])}"
        )
    n, d = rows.shape
    n_words = words_for_bits(d)
    bits = np.zeros((n, n_words * WORD_BITS), dtype=np.uint8)
    bits[:, :d] = rows > 0
    packed = np.packbits(bits, axis=1, bitorder="little")
    return np.asarray(packed.view("<u8"), dtype=np.uint64)


def unpack_word_matrix(words: np.ndarray, n_bits: int) -> np.ndarray:
    """Inverse of :func:`pack_sign_matrix`: (n, W) words -> (n, d) of +/-1."""
    words = np.asarray(words, dtype=np.uint64)
    if words.ndim != 2 or words.shape[1] != words_for_bits(n_bits):
        raise ShapeError(
            f"expected (n, {words_for_bits(n_bits)}) words for {n_bits} bits, "
            f"got shape {words.shape}"
        )
    raw = np.asarray(words, dtype="<u8").view(np.uint8).reshape(words.shape[0], -1)
    bits = np.unpackbits(raw, axis=1, bitorder="little")[:, :n_bits]
    return bits.astype(np.float64) * 2.0 - 1.0


def sign_quantize(embedding: np.ndarray) -> BinaryCode:
    """Quantize a real vector to its sign code: bit i is 1 iff entry i > 0.

    Zero quantizes to -1 (bit 0) so the map is total and deterministic.
    """
    arr = _check_finite_vector(embedding, "embedding")
    words = pack_sign_matrix(arr[None, :])[0]
    return BinaryCode(words, arr.shape[0])


def pack_bits(signs: np.ndarray) -> BinaryCode:
    """Pack a {-1,+1} sign vector into a code. Rejects any other values."""
    arr = _check_finite_vector(signs, "sign vector")
    if not np.all(np.abs(arr) == 1.0):
        bad = int(np.flatnonzero(np.abs(arr) != 1.0)[0])
        raise InvalidInputError(f"entry {bad} is not +/-1: {arr[bad]!r}")
    return sign_quantize(arr)


def unpack_bits(code: BinaryCode) -> np.ndarray:
    """Unpack a code back into its {-1,+1} float vector."""
    return unpack_word_matrix(code.words[None, :], code.n_bits)[0]


def hamming_distance(a: BinaryCode, b: BinaryCode) -> int:
    """Number of differing bits, popcount(a XOR b) over the first d bits."""
    if a.n_bits != b.n_bits:
        raise ShapeError(f"code lengths differ: {a.n_bits} vs {b.n_bits}")
    diff = a.words ^ b.words
    diff[-1] &= tail_mask(a.n_bits)
    return int(np.bitwise_count(diff).sum())


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1].

    Raises :class:`DegenerateInputError` when either norm is below 1e-12.
    """
    va = _check_finite_vector(a, "first vector")
    vb = _check_finite_vector(b, "second vector")
    if va.shape[0] != vb.shape[0]:
        raise ShapeError(f"lengths differ: {va.shape[0]} vs {vb.shape[0]}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na < NORM_EPS or nb < NORM_EPS:
        raise DegenerateInputError(f"norm below {NORM_EPS:g}: {min(na, nb):g}")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))
