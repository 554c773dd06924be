"""Construction and lookup of the cascading bit-array minimal perfect hash."""

from __future__ import annotations

import itertools
import logging
import math
import os
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import analysis
from .bitvector import DEFAULT_INTERVAL, AtomicBitPair, RankedBits
from .errors import ConfigError, DuplicateKeys, EmptyInput, NotInFallback
from .hashing import HashSeed, Key, key_bytes, position, positions
from .keys import DEFAULT_CHUNK, INT64, KeySource, as_source
from .spill import (
    MemoryBuffer,
    RescanBuffer,
    SourceBuffer,
    SpillTracker,
    Strategy,
    next_level_sink,
)

log = logging.getLogger(__name__)

FALLBACK = -1

_build_ids = itertools.count()


@dataclass(frozen=True)
class BuildConfig:
    gamma: float = 2.0
    workers: int = 1
    max_levels: int = 25
    rank_interval: int = DEFAULT_INTERVAL
    strategy: str = Strategy.DISK_SPILL.value
    spill_to_memory_threshold: float = 0.02
    seed: int = 0
    temp_dir: Optional[str] = None
    chunk_size: int = DEFAULT_CHUNK

    def __post_init__(self):
        if not (isinstance(self.gamma, (int, float)) and math.isfinite(self.gamma) and self.gamma >= 1):
            raise ConfigError(f"gamma must be a finite number >= 1, got {self.gamma!r}")
        for name in ("workers", "max_levels", "rank_interval", "chunk_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)!r}")
        if not 0 <= self.spill_to_memory_threshold <= 1:
            raise ConfigError("spill_to_memory_threshold must lie in [0, 1]")
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy).value)
        if isinstance(self.seed, HashSeed):
            object.__setattr__(self, "seed", self.seed.master)
        HashSeed(self.seed)


@dataclass
class BuildReport:
    n: int
    level_sizes: list = field(default_factory=list)
    level_bits: list = field(default_factory=list)
    level_weights: list = field(default_factory=list)
    peak_bits_in_memory: int = 0
    peak_spill_bytes: int = 0
    fallback_count: int = 0
    source_passes: int = 0
    spill_files: int = 0
    wall_times: dict = field(default_factory=dict)

    @property
    def levels(self) -> int:
        return len(self.level_sizes)


def peak_bits(level_bits) -> int:
    """max over d of (bits of all earlier levels + twice the bits of level d)."""
    peak = done = 0
    for bits in level_bits:
        peak = max(peak, done + 2 * bits)
        done += bits
    return peak


class Mphf:
    """A built minimal perfect hash function over ``n`` keys.

    ``query`` maps every member key to a distinct index in ``[0, n)``. Keys
    outside the build set get an arbitrary answer (or ``NotInFallback``).
    """

    def __init__(self, levels, fallback, n, gamma, seed, rank_interval):
        self.levels = list(levels)
        self.fallback = dict(fallback)
        self.n = int(n)
        self.gamma = float(gamma)
        self.seed = int(seed)
        self.rank_interval = int(rank_interval)
        self.level_weights = [lvl.weight for lvl in self.levels]
        self.cumulative_weights = [0]
        for w in self.level_weights[:-1]:
            self.cumulative_weights.append(self.cumulative_weights[-1] + w)
        placed = sum(self.level_weights)
        if placed + len(self.fallback) != self.n:
            raise ValueError(f"{placed} placed + {len(self.fallback)} fallback keys != n={self.n}")

    def __len__(self):
        return self.n

    def __repr__(self):
        return (f"Mphf(n={self.n}, gamma={self.gamma}, levels={len(self.levels)}, "
                f"fallback={len(self.fallback)})")

    @property
    def level_bits(self) -> list[int]:
        return [lvl.size for lvl in self.levels]

    @property
    def core_bits(self) -> int:
        return sum(self.level_bits)

    @property
    def storage_bits(self) -> int:
        """Bits held by the level words and their rank checkpoints."""
        return sum(lvl.storage_bits for lvl in self.levels)

    @property
    def bits_per_key(self) -> float:
        return self.storage_bits / self.n

    def query_level(self, key: Key) -> int:
        for d, level in enumerate(self.levels):
            if level.test(position(key, d, self.seed, level.size)):
                return d
        if key_bytes(key) in self.fallback:
            return FALLBACK
        raise NotInFallback(key)

    def query(self, key: Key) -> int:
        for d, level in enumerate(self.levels):
            h = position(key, d, self.seed, level.size)
            if level.test(h):
                return self.cumulative_weights[d] + level.rank1_inclusive(h) - 1
        try:
            return self.fallback[key_bytes(key)]
        except KeyError:
            raise NotInFallback(key) from None

    def __getitem__(self, key: Key) -> int:
        return self.query(key)

    def _resolve(self, keys, want_rank: bool):
        if not isinstance(keys, np.ndarray):
            keys = list(keys)
            if keys and isinstance(keys[0], (int, np.integer)):
                keys = np.array(keys, dtype=np.uint64)
        is_int = isinstance(keys, np.ndarray)
        total = len(keys)
        out = np.full(total, -1, dtype=np.int64)
        pending = np.arange(total)
        sub = keys
        for d, level in enumerate(self.levels):
            if not len(pending):
                break
            h = positions(sub, d, self.seed, level.size)
            hit = level.test_many(h)
            idx = pending[hit]
            if want_rank:
                out[idx] = self.cumulative_weights[d] + level.rank_many(h[hit].astype(np.int64)) - 1
            else:
                out[idx] = d
            miss = ~hit
            pending = pending[miss]
            sub = sub[miss] if is_int else [k for k, m in zip(sub, miss) if m]
        for i, key in zip(pending, sub if not is_int else (int(k) for k in sub)):
            kb = key_bytes(key)
            if kb not in self.fallback:
                raise NotInFallback(key)
            out[i] = self.fallback[kb] if want_rank else FALLBACK
        return out

    def query_many(self, keys) -> np.ndarray:
        """Vectorized :meth:`query` over a uint64 array or a list of keys."""
        return self._resolve(keys, True)

    def query_level_many(self, keys) -> np.ndarray:
        return self._resolve(keys, False)


def query(m: Mphf, key: Key) -> int:
    return m.query(key)


def query_level(m: Mphf, key: Key) -> int:
    return m.query_level(key)


def _ordered_map(pool, fn, items, window):
    if pool is None:
        yield from map(fn, items)
        return
    pending = deque()
    for item in items:
        pending.append(pool.submit(fn, item))
        if len(pending) >= window:
            yield pending.popleft().result()
    while pending:
        yield pending.popleft().result()


def _select(chunk, mask):
    if isinstance(chunk, np.ndarray):
        return chunk[mask]
    return [k for k, m in zip(chunk, mask) if m]


def _check_duplicates(buffer) -> None:
    seen = set()
    for key in buffer.keys():
        if key in seen:
            raise DuplicateKeys(f"duplicate key {key!r} in input", key)
        seen.add(key)


def _drain(source: KeySource, cfg: BuildConfig, tracker, build_id):
    # a one-shot stream is stored once so that level 0 can read it twice
    buf = MemoryBuffer(source.kind)
    for chunk in source.chunks(cfg.chunk_size):
        buf.append(chunk)
    if buf.count == 0:
        raise EmptyInput("key source is empty")
    if cfg.strategy != Strategy.DISK_SPILL.value:
        buf.seal()
        return buf
    disk = next_level_sink(cfg, 0, buf.count, buf.count, source.kind, tracker, build_id)
    try:
        for chunk in buf.chunks(cfg.chunk_size):
            disk.append(chunk)
    except BaseException:
        disk.release()
        raise
    disk.seal()
    buf.release()
    return disk


def build(keys, cfg: BuildConfig | None = None, **overrides) -> tuple[Mphf, BuildReport]:
    """Build a minimal perfect hash over ``keys``.

    ``keys`` may be a :class:`KeySource`, a uint64 array, or a list of ints or
    byte strings. Keyword overrides are applied on top of ``cfg``.
    """
    cfg = replace(cfg or BuildConfig(), **overrides)
    source = as_source(keys)
    strategy = Strategy(cfg.strategy)
    if strategy is Strategy.RESCAN_INPUT and not source.rewindable:
        raise ConfigError("rescan-input needs a rewindable key source")

    tracker = SpillTracker()
    build_id = f"{os.getpid()}-{next(_build_ids)}"
    t_start = time.perf_counter()
    origin = None
    if source.rewindable:
        origin = current = SourceBuffer(source, source.count())
    else:
        current = _drain(source, cfg, tracker, build_id)
    n = current.count
    if n == 0:
        raise EmptyInput("key source is empty")

    report = BuildReport(n=n)
    levels: list[RankedBits] = []
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    window = 2 * cfg.workers
    chunk = max(1024, min(cfg.chunk_size, -(-n // cfg.workers)))
    fill_time = filter_time = 0.0
    stagnant = 0

    def unplaced_below(depth):
        def unplaced(keys_chunk):
            mask = np.ones(len(keys_chunk), dtype=bool)
            idx = np.arange(len(keys_chunk))
            sub = keys_chunk
            for d in range(depth):
                level = levels[d]
                hit = level.test_many(positions(sub, d, cfg.seed, level.size))
                mask[idx[hit]] = False
                idx = idx[~hit]
                sub = _select(sub, ~hit)
                if not len(idx):
                    break
            return mask
        return unplaced

    live = [current]
    try:
        d = 0
        while current.count > 0 and d < cfg.max_levels:
            size = max(1, math.ceil(cfg.gamma * current.count))
            report.level_sizes.append(current.count)
            report.level_bits.append(size)
            pair = AtomicBitPair(size)

            t0 = time.perf_counter()
            def fill_positions(c, d=d, size=size):
                return positions(c, d, cfg.seed, size)

            for h in _ordered_map(pool, fill_positions, current.chunks(chunk), window):
                pair.record_many(h)
            level = pair.freeze(cfg.rank_interval)
            levels.append(level)
            report.level_weights.append(level.weight)
            remaining = current.count - level.weight
            t1 = time.perf_counter()
            fill_time += t1 - t0

            if strategy is Strategy.RESCAN_INPUT:
                nxt = RescanBuffer(origin, unplaced_below(d + 1), remaining)
            else:
                expected = current.count * analysis.collision_fraction(cfg.gamma)
                nxt = next_level_sink(cfg, d + 1, expected, n, source.kind, tracker, build_id)
                live.append(nxt)

                def leftovers(c, d=d, level=level, size=size):
                    return _select(c, ~level.test_many(positions(c, d, cfg.seed, size)))

                for part in _ordered_map(pool, leftovers, current.chunks(chunk), window):
                    nxt.append(part)
                nxt.seal()
                if nxt.count != remaining:
                    raise AssertionError(f"level {d}: {nxt.count} leftovers, expected {remaining}")
                current.release()
            filter_time += time.perf_counter() - t1
            log.debug("level %d: %d keys, %d bits, %d placed", d, current.count, size, level.weight)

            stagnant = stagnant + 1 if level.weight == 0 else 0
            if stagnant >= 2:
                _check_duplicates(nxt)
                stagnant = 0
            current = nxt
            d += 1

        t2 = time.perf_counter()
        fallback = {}
        if current.count:
            base = n - current.count
            for i, key in enumerate(current.keys()):
                kb = key_bytes(key)
                if kb in fallback:
                    raise DuplicateKeys(f"duplicate key {key!r} in input", key)
                fallback[kb] = base + i
        current.release()
        report.wall_times["fallback"] = time.perf_counter() - t2
    except BaseException:
        for buf in live:
            buf.release()
        raise
    finally:
        if pool is not None:
            pool.shutdown()

    report.fallback_count = len(fallback)
    report.peak_bits_in_memory = peak_bits(report.level_bits)
    report.peak_spill_bytes = tracker.peak
    report.spill_files = tracker.files_created
    report.source_passes = origin.passes if origin is not None else 0
    report.wall_times.update(fill=fill_time, filter=filter_time,
                             total=time.perf_counter() - t_start)
    mphf = Mphf(levels, fallback, n, cfg.gamma, cfg.seed, cfg.rank_interval)
    return mphf, report
