"""Seeded per-level hash functions.

Every key is treated as a byte sequence; a 64-bit integer key hashes exactly
like its 8-byte little-endian encoding. The constants below are part of the
serialized format (see docs/FORMAT.md) and must not change.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF

GOLDEN = 0x9E3779B97F4A7C15
FIN_MUL1 = 0xBF58476D1CE4E5B9
FIN_MUL2 = 0x94D049BB133111EB
WORD_MUL = 0x9FB21C651E98DF25
LEN_MUL = 0xC2B2AE3D27D4EB4F

Key = Union[int, bytes]

_U = np.uint64


@dataclass(frozen=True)
class HashSeed:
    master: int = 0

    def __post_init__(self):
        if not 0 <= self.master <= MASK64:
            raise ValueError(f"seed must fit in 64 bits, got {self.master}")


def finalize(x: int) -> int:
    """xorshift-multiply finalizer; a bijection on 64-bit words."""
    x &= MASK64
    x ^= x >> 30
    x = (x * FIN_MUL1) & MASK64
    x ^= x >> 27
    x = (x * FIN_MUL2) & MASK64
    x ^= x >> 31
    return x


def finalize_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64).copy()
    x ^= x >> _U(30)
    x *= _U(FIN_MUL1)
    x ^= x >> _U(27)
    x *= _U(FIN_MUL2)
    x ^= x >> _U(31)
    return x


def level_seed(seed: HashSeed | int, level: int) -> int:
    master = seed.master if isinstance(seed, HashSeed) else seed
    return finalize(master + (level + 1) * GOLDEN)


def key_bytes(key: Key) -> bytes:
    if isinstance(key, (bytes, bytearray, memoryview)):
        return bytes(key)
    key = int(key)
    if not 0 <= key <= MASK64:
        raise ValueError(f"integer key out of 64-bit range: {key}")
    return key.to_bytes(8, "little")


def _absorb(h: int, word: int) -> int:
    h ^= word
    h = (h * WORD_MUL) & MASK64
    return h ^ (h >> 32)


def hash_bytes(data: bytes, lseed: int) -> int:
    h = lseed ^ ((len(data) * LEN_MUL) & MASK64)
    for off in range(0, len(data), 8):
        h = _absorb(h, int.from_bytes(data[off:off + 8], "little"))
    return finalize(h)


def hash_level(key: Key, level: int, seed: HashSeed | int) -> int:
    """64-bit hash of ``key`` under the level-``level`` function."""
    return hash_bytes(key_bytes(key), level_seed(seed, level))


def position(key: Key, level: int, seed: HashSeed | int, array_size: int) -> int:
    if array_size <= 0:
        raise ValueError(f"array_size must be positive, got {array_size}")
    return hash_level(key, level, seed) % array_size


# -- batch versions ---------------------------------------------------------

def _absorb_array(h: np.ndarray, words: np.ndarray) -> np.ndarray:
    h ^= words
    h *= _U(WORD_MUL)
    h ^= h >> _U(32)
    return h


def hash_ints(keys: np.ndarray, lseed: int) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.uint64)
    h = np.full(keys.shape, lseed ^ ((8 * LEN_MUL) & MASK64), dtype=np.uint64)
    return finalize_array(_absorb_array(h, keys))


def _pack_words(group: Sequence[bytes], length: int) -> np.ndarray:
    nwords = (length + 7) // 8
    raw = np.frombuffer(b"".join(group), dtype=np.uint8).reshape(len(group), length)
    if length % 8:
        padded = np.zeros((len(group), nwords * 8), dtype=np.uint8)
        padded[:, :length] = raw
        raw = padded
    return np.ascontiguousarray(raw).view("<u8").astype(np.uint64, copy=False)


def hash_byte_keys(keys: Sequence[bytes], lseed: int) -> np.ndarray:
    """Hash a batch of byte-string keys; keys of equal length share one pass."""
    out = np.empty(len(keys), dtype=np.uint64)
    if not keys:
        return out
    lengths = np.fromiter((len(k) for k in keys), dtype=np.int64, count=len(keys))
    for length in np.unique(lengths):
        idx = np.flatnonzero(lengths == length)
        group = [keys[i] for i in idx] if len(idx) < len(keys) else list(keys)
        h = np.full(len(idx), lseed ^ ((int(length) * LEN_MUL) & MASK64), dtype=np.uint64)
        if length:
            words = _pack_words(group, int(length))
            for j in range(words.shape[1]):
                h = _absorb_array(h, words[:, j])
        out[idx] = finalize_array(h)
    return out


def hash_many(keys, level: int, seed: HashSeed | int) -> np.ndarray:
    """Batch ``hash_level`` over a uint64 array or a sequence of byte strings."""
    lseed = level_seed(seed, level)
    if isinstance(keys, np.ndarray):
        return hash_ints(keys, lseed)
    return hash_byte_keys(keys, lseed)


def positions(keys, level: int, seed: HashSeed | int, array_size: int) -> np.ndarray:
    if array_size <= 0:
        raise ValueError(f"array_size must be positive, got {array_size}")
    return hash_many(keys, level, seed) % _U(array_size)
