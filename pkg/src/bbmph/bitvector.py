"""Bit arrays for level construction and ranked lookup.

``AtomicBitPair`` holds the per-level placement/collision state. Each position
carries two bits interleaved in 64-bit words (32 positions per word): the low
bit is the placement bit A, the high bit the collision bit C. A position moves
0 -> A -> C and stays at C, so its final state depends only on how many times
it was recorded, never on the order.

``RankedBits`` is the frozen placement array with cumulative popcounts
sampled every ``interval`` positions.
"""

from __future__ import annotations

import threading
from typing import Iterable

import numpy as np

_U = np.uint64
_EVEN = _U(0x5555555555555555)
_ALL = _U(0xFFFFFFFFFFFFFFFF)

EMPTY, PLACED, COLLIDED = 0, 1, 2

DEFAULT_INTERVAL = 512


def popcount(words: np.ndarray) -> np.ndarray:
    return np.bitwise_count(words)


def merge_states(s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Combine two interleaved state words as saturating per-position counts."""
    s_a, s_c = s & _EVEN, (s >> _U(1)) & _EVEN
    t_a, t_c = t & _EVEN, (t >> _U(1)) & _EVEN
    c = s_c | t_c | (s_a & t_a)
    a = (s_a ^ t_a) & ~c
    return a | (c << _U(1))


def _compact_even_bits(x: np.ndarray) -> np.ndarray:
    # gather bits 0,2,4,... of each word into its low 32 bits
    x = x & _EVEN
    x = (x | (x >> _U(1))) & _U(0x3333333333333333)
    x = (x | (x >> _U(2))) & _U(0x0F0F0F0F0F0F0F0F)
    x = (x | (x >> _U(4))) & _U(0x00FF00FF00FF00FF)
    x = (x | (x >> _U(8))) & _U(0x0000FFFF0000FFFF)
    x = (x | (x >> _U(16))) & _U(0x00000000FFFFFFFF)
    return x


class AtomicBitPair:
    """Concurrent A/C state array.

    CPython offers no hardware compare-exchange, so :meth:`compare_exchange`
    is made indivisible with a lock. Callers only ever go through it (or the
    bulk merge, which holds the same lock), which is what makes concurrent
    recording deterministic.
    """

    def __init__(self, size: int):
        if size <= 0:
            raise ValueError(f"size must be positive, got {size}")
        self.size = int(size)
        self._words = np.zeros((self.size + 31) // 32, dtype=np.uint64)
        self._lock = threading.Lock()
        self._frozen = False

    def _check_live(self):
        if self._frozen:
            raise RuntimeError("bit pair already frozen")

    def load_word(self, w: int) -> int:
        return int(self._words[w])

    def compare_exchange(self, w: int, expected: int, desired: int) -> tuple[bool, int]:
        """Store ``desired`` at word ``w`` iff it still holds ``expected``.

        Returns ``(swapped, value_seen)``.
        """
        with self._lock:
            current = int(self._words[w])
            if current != expected:
                return False, current
            self._words[w] = desired
            return True, current

    def state(self, i: int) -> tuple[int, int]:
        """(A, C) bits of position ``i``."""
        if not 0 <= i < self.size:
            raise IndexError(f"position {i} out of range [0, {self.size})")
        s = (self.load_word(i >> 5) >> (2 * (i & 31))) & 3
        return s & 1, s >> 1

    def record(self, i: int) -> None:
        self._check_live()
        if not 0 <= i < self.size:
            raise IndexError(f"position {i} out of range [0, {self.size})")
        w, shift = i >> 5, 2 * (i & 31)
        old = self.load_word(w)
        while True:
            s = (old >> shift) & 3
            if s == COLLIDED:
                return
            if s == 3:
                raise AssertionError(f"unreachable state A=1,C=1 at position {i}")
            new = old & ~(3 << shift) | ((s + 1) << shift)
            ok, old = self.compare_exchange(w, old, new)
            if ok:
                return

    def record_many(self, positions: np.ndarray) -> None:
        """Record every entry of ``positions`` (repeats count as repeats)."""
        self._check_live()
        pos = np.asarray(positions, dtype=np.uint64)
        if pos.size == 0:
            return
        if int(pos.max()) >= self.size:
            raise IndexError(f"position {int(pos.max())} out of range [0, {self.size})")
        uniq, counts = np.unique(pos, return_counts=True)
        states = np.where(counts == 1, _U(PLACED), _U(COLLIDED))
        vals = states << ((uniq & _U(31)) << _U(1))
        widx = uniq >> _U(5)
        starts = np.flatnonzero(np.concatenate(([True], widx[1:] != widx[:-1])))
        local = np.bitwise_or.reduceat(vals, starts)
        widx = widx[starts].astype(np.intp)
        with self._lock:
            self._words[widx] = merge_states(self._words[widx], local)

    def raw_words(self) -> np.ndarray:
        return self._words.copy()

    def freeze(self, interval: int = DEFAULT_INTERVAL) -> "RankedBits":
        """Drop the collision bits and return the placement bits with ranks."""
        self._check_live()
        half = _compact_even_bits(self._words)
        if len(half) % 2:
            half = np.append(half, _U(0))
        words = half[0::2] | (half[1::2] << _U(32))
        self._frozen = True
        self._words = None
        return RankedBits(words, self.size, interval)


class RankedBits:
    """Immutable bit array with sampled cumulative rank.

    Bit ``i`` lives in word ``i // 64`` at bit offset ``i % 64``.
    ``checkpoints[j]`` counts set bits in ``[0, j * interval)``.
    """

    def __init__(self, words, size: int, interval: int = DEFAULT_INTERVAL, checkpoints=None):
        if interval <= 0:
            raise ValueError(f"interval must be positive, got {interval}")
        if size < 0:
            raise ValueError(f"size must be non-negative, got {size}")
        words = np.asarray(words, dtype=np.uint64)
        if len(words) != (size + 63) // 64:
            raise ValueError(f"{len(words)} words cannot hold exactly {size} bits")
        tail = size % 64
        if tail and int(words[-1]) >> tail:
            raise ValueError("bits set beyond the declared size")
        self.words = words
        self.size = int(size)
        self.interval = int(interval)
        self._word_cum = np.concatenate(([0], np.cumsum(popcount(words), dtype=np.int64)))
        self.weight = int(self._word_cum[-1])
        computed = self._prefix(np.arange(0, self.size, self.interval, dtype=np.int64))
        if checkpoints is None:
            checkpoints = computed
        else:
            checkpoints = np.asarray(checkpoints, dtype=np.int64)
            if not np.array_equal(checkpoints, computed):
                raise ValueError("checkpoints disagree with the bit contents")
        self.checkpoints = checkpoints.astype(np.uint64)
        self._cp = checkpoints.astype(np.int64)
        self._span = (self.interval + 63) // 64 + 1

    @classmethod
    def from_bits(cls, bits: Iterable[int], interval: int = DEFAULT_INTERVAL) -> "RankedBits":
        bits = np.asarray(list(bits), dtype=np.uint8)
        nwords = (len(bits) + 63) // 64
        padded = np.zeros(nwords * 64, dtype=np.uint8)
        padded[: len(bits)] = bits
        packed = np.packbits(padded, bitorder="little")
        return cls(packed.view("<u8").astype(np.uint64), len(bits), interval)

    def _prefix(self, p: np.ndarray) -> np.ndarray:
        # set bits in [0, p); only used at construction (needs _word_cum)
        w = p >> 6
        off = (p & 63).astype(np.uint64)
        safe = np.minimum(w, max(len(self.words) - 1, 0))
        if len(self.words) == 0:
            return np.zeros(len(p), dtype=np.int64)
        partial = popcount(self.words[safe] & ((_U(1) << off) - _U(1))).astype(np.int64)
        partial = np.where(w < len(self.words), partial, 0)
        return self._word_cum[w] + partial

    def __len__(self):
        return self.size

    def __eq__(self, other):
        if not isinstance(other, RankedBits):
            return NotImplemented
        return (self.size == other.size and self.interval == other.interval
                and np.array_equal(self.words, other.words))

    def __repr__(self):
        return f"RankedBits(size={self.size}, weight={self.weight}, interval={self.interval})"

    @property
    def storage_bits(self) -> int:
        return 64 * (len(self.words) + len(self.checkpoints))

    def to_list(self) -> list[int]:
        return [self.test(i) for i in range(self.size)]

    def _check(self, y: int):
        if not 0 <= y < self.size:
            raise IndexError(f"position {y} out of range [0, {self.size})")

    def test(self, i: int) -> int:
        self._check(i)
        return (int(self.words[i >> 6]) >> (i & 63)) & 1

    def test_many(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.uint64)
        return ((self.words[idx >> _U(6)] >> (idx & _U(63))) & _U(1)).astype(bool)

    def rank1_inclusive(self, y: int) -> int:
        """Number of set bits in ``[0, y]``."""
        self._check(y)
        start = (y // self.interval) * self.interval
        count = int(self._cp[y // self.interval])
        w0, w1 = start >> 6, y >> 6
        for w in range(w0, w1 + 1):
            word = int(self.words[w])
            if w == w0:
                word &= ~((1 << (start & 63)) - 1)
            if w == w1:
                word &= (1 << ((y & 63) + 1)) - 1
            count += word.bit_count()
        return count

    def rank_many(self, ys: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`rank1_inclusive`."""
        y = np.asarray(ys, dtype=np.int64)
        if y.size == 0:
            return np.zeros(0, dtype=np.int64)
        if int(y.min()) < 0 or int(y.max()) >= self.size:
            raise IndexError("rank position out of range")
        block = y // self.interval
        start = block * self.interval
        count = self._cp[block].copy()
        w0, w1 = start >> 6, y >> 6
        lo = _ALL << (start & 63).astype(np.uint64)
        hi = _ALL >> (63 - (y & 63)).astype(np.uint64)
        last = len(self.words) - 1
        for k in range(self._span):
            w = w0 + k
            active = w <= w1
            if not active.any():
                break
            word = self.words[np.minimum(w, last)]
            word = np.where(w == w0, word & lo, word)
            word = np.where(w == w1, word & hi, word)
            count += np.where(active, popcount(word), 0).astype(np.int64)
        return count
