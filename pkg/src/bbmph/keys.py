"""Key sources.

A source hands out keys in chunks: uint64 numpy arrays for integer keys,
lists of ``bytes`` for string keys. Rewindable sources can be iterated any
number of times and always in the same order.
"""

from __future__ import annotations

import os
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigError
from .hashing import MASK64, finalize, finalize_array

INT64 = "int64"
BYTES = "bytes"

DEFAULT_CHUNK = 1 << 18

ALPHABET = b"abcdefghijklmnopqrstuvwxyz"
_ID_DIGITS = 13  # 26**13 < 2**64

_U = np.uint64
_PERM_MUL = (0xD6E8FEB86659FD93, 0xA0761D6478BD642F, 0xE7037ED1A0B428DB)


class KeySource:
    kind: str = INT64
    rewindable: bool = True

    def count(self) -> int:
        raise NotImplementedError

    def chunks(self, size: int = DEFAULT_CHUNK) -> Iterator:
        raise NotImplementedError

    def __iter__(self):
        for chunk in self.chunks():
            if self.kind == INT64:
                yield from (int(k) for k in chunk)
            else:
                yield from chunk


class ArrayKeys(KeySource):
    """In-memory 64-bit integer keys."""

    kind = INT64

    def __init__(self, keys):
        self.keys = np.ascontiguousarray(np.asarray(keys, dtype=np.uint64))

    def count(self):
        return len(self.keys)

    def chunks(self, size=DEFAULT_CHUNK):
        for start in range(0, len(self.keys), size):
            yield self.keys[start:start + size]


class BytesKeys(KeySource):
    kind = BYTES

    def __init__(self, keys: Sequence[bytes]):
        self.keys = [bytes(k) for k in keys]

    def count(self):
        return len(self.keys)

    def chunks(self, size=DEFAULT_CHUNK):
        for start in range(0, len(self.keys), size):
            yield self.keys[start:start + size]


class IterKeys(KeySource):
    """One-shot stream. Not rewindable; the count is unknown until drained."""

    rewindable = False

    def __init__(self, keys: Iterable, kind: str = INT64):
        if kind not in (INT64, BYTES):
            raise ConfigError(f"unknown key kind {kind!r}")
        self.kind = kind
        self._it = iter(keys)
        self._used = False

    def count(self):
        raise TypeError("a one-shot stream has no known length")

    def chunks(self, size=DEFAULT_CHUNK):
        if self._used:
            raise RuntimeError("one-shot key stream already consumed")
        self._used = True
        while True:
            batch = []
            for key in self._it:
                batch.append(key)
                if len(batch) == size:
                    break
            if not batch:
                return
            if self.kind == INT64:
                yield np.array(batch, dtype=np.uint64)
            else:
                yield [bytes(k) for k in batch]
            if len(batch) < size:
                return


class LineFileKeys(KeySource):
    """One key per line; the trailing newline is not part of the key."""

    kind = BYTES

    def __init__(self, path: str | os.PathLike):
        self.path = os.fspath(path)
        self._count = None

    def count(self):
        if self._count is None:
            self._count = sum(1 for _ in self._lines())
        return self._count

    def _lines(self):
        with open(self.path, "rb") as fh:
            for line in fh:
                yield line[:-1] if line.endswith(b"\n") else line

    def chunks(self, size=DEFAULT_CHUNK):
        batch = []
        for line in self._lines():
            batch.append(line)
            if len(batch) == size:
                yield batch
                batch = []
        if batch:
            yield batch


def _round_keys(seed: int) -> list[int]:
    return [finalize(seed + 0x1234567 * (r + 1)) for r in range(3)]


def permute(x: np.ndarray, bits: int, seed: int) -> np.ndarray:
    """Keyed bijection on ``bits``-bit integers (add, odd multiply, xorshift)."""
    mask = _U((1 << bits) - 1)
    shift = _U(max(1, bits // 2))
    x = np.asarray(x, dtype=np.uint64).copy()
    for rk, mul in zip(_round_keys(seed), _PERM_MUL):
        x = (x + _U(rk)) & mask
        x = (x * _U(mul)) & mask
        x ^= x >> shift
    return x


def permute_below(x: np.ndarray, limit: int, seed: int) -> np.ndarray:
    """Bijection on ``[0, limit)`` by cycle-walking :func:`permute`."""
    if limit > MASK64:
        return permute(x, 64, seed)
    bits = max(1, (limit - 1).bit_length())
    x = permute(x, bits, seed)
    bad = np.flatnonzero(x >= _U(limit))
    while bad.size:
        x[bad] = permute(x[bad], bits, seed)
        bad = bad[x[bad] >= _U(limit)]
    return x


class SyntheticIntKeys(KeySource):
    """``n`` distinct 64-bit keys: a counter pushed through a keyed permutation."""

    kind = INT64

    def __init__(self, n: int, seed: int = 0):
        if n < 1:
            raise ConfigError(f"key count must be at least 1, got {n}")
        if n > MASK64 + 1:
            raise ConfigError("cannot draw more than 2**64 distinct 64-bit keys")
        self.n = int(n)
        self.seed = int(seed) & MASK64

    def count(self):
        return self.n

    def chunks(self, size=DEFAULT_CHUNK):
        for start in range(0, self.n, size):
            stop = min(self.n, start + size)
            yield permute(np.arange(start, stop, dtype=np.uint64), 64, self.seed)

    def materialize(self) -> ArrayKeys:
        return ArrayKeys(np.concatenate(list(self.chunks())))


def _digits(values: np.ndarray, ndigits: int) -> np.ndarray:
    # least significant digit last, so each row reads as a base-26 numeral
    out = np.empty((len(values), ndigits), dtype=np.uint8)
    v = values.copy()
    for j in range(ndigits - 1, -1, -1):
        out[:, j] = (v % _U(26)).astype(np.uint8)
        v //= _U(26)
    return out


class SyntheticStringKeys(KeySource):
    """``n`` distinct lowercase ASCII words of exactly ``length`` bytes.

    The first ``min(length, 13)`` letters spell a permuted counter in base 26,
    which is what makes the words distinct; any remaining letters are filler
    derived from a hash of the counter.
    """

    kind = BYTES

    def __init__(self, n: int, length: int, seed: int = 0):
        if n < 1:
            raise ConfigError(f"key count must be at least 1, got {n}")
        if length < 1:
            raise ConfigError(f"string length must be at least 1, got {length}")
        self.id_digits = min(length, _ID_DIGITS)
        self.limit = 26 ** self.id_digits
        if n > self.limit:
            raise ConfigError(f"cannot draw {n} distinct words of length {length}")
        self.n, self.length = int(n), int(length)
        self.seed = int(seed) & MASK64

    def count(self):
        return self.n

    def chunks(self, size=DEFAULT_CHUNK):
        alphabet = np.frombuffer(ALPHABET, dtype=np.uint8)
        for start in range(0, self.n, size):
            filler = self.length - self.id_digits
            counter = np.arange(start, min(self.n, start + size), dtype=np.uint64)
            ident = permute_below(counter, self.limit, self.seed)
            cols = [_digits(ident, self.id_digits)]
            salt = 0
            while filler > 0:
                take = min(filler, _ID_DIGITS)
                salt += 1
                noise = finalize_array(counter ^ _U(finalize(self.seed ^ salt)))
                cols.append(_digits(noise, take))
                filler -= take
            letters = alphabet[np.hstack(cols)]
            raw = letters.tobytes()
            w = self.length
            yield [raw[i * w:(i + 1) * w] for i in range(len(counter))]


def generate_keys(n: int, seed: int = 0) -> SyntheticIntKeys:
    return SyntheticIntKeys(n, seed)


def generate_strings(n: int, length: int, seed: int = 0) -> SyntheticStringKeys:
    return SyntheticStringKeys(n, length, seed)


def as_source(keys) -> KeySource:
    """Wrap a plain collection of keys in the matching source type."""
    if isinstance(keys, KeySource):
        return keys
    if isinstance(keys, np.ndarray):
        return ArrayKeys(keys)
    keys = list(keys)
    if keys and all(isinstance(k, (bytes, bytearray)) for k in keys):
        return BytesKeys(keys)
    if all(isinstance(k, (int, np.integer)) for k in keys):
        return ArrayKeys(np.array([int(k) for k in keys], dtype=np.uint64))
    raise ConfigError("keys must be all integers or all byte strings")
