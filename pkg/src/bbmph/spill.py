"""Storage for the not-yet-placed keys between levels.

Three strategies:

* ``disk-spill``: the keys that collide at level d are appended to a temporary
  file and read back at level d+1; small sets stay in memory.
* ``rescan-input``: nothing is stored; each level re-reads the original
  source and keeps the keys that no earlier level placed.
* ``in-memory``: everything stays in RAM.
"""

from __future__ import annotations

import enum
import os
import struct
import tempfile
from typing import Callable, Iterator

import numpy as np

from .errors import ConfigError, SpillIOError
from .keys import DEFAULT_CHUNK, INT64, KeySource


class Strategy(str, enum.Enum):
    DISK_SPILL = "disk-spill"
    RESCAN_INPUT = "rescan-input"
    IN_MEMORY = "in-memory"

    @classmethod
    def parse(cls, value) -> "Strategy":
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise ConfigError(f"unknown strategy {value!r} (expected one of {names})") from None


class SpillTracker:
    """Tracks bytes held by live disk buffers and the peak of that sum."""

    def __init__(self):
        self.live = 0
        self.peak = 0
        self.files_created = 0

    def grow(self, nbytes: int):
        self.live += nbytes
        self.peak = max(self.peak, self.live)

    def shrink(self, nbytes: int):
        self.live -= nbytes


def encode_records(chunk, kind: str) -> bytes:
    if kind == INT64:
        return np.asarray(chunk, dtype="<u8").tobytes()
    parts = []
    for key in chunk:
        parts.append(struct.pack("<I", len(key)))
        parts.append(key)
    return b"".join(parts)


def _empty(kind):
    return np.zeros(0, dtype=np.uint64) if kind == INT64 else []


class LevelBuffer:
    """Append-only key store; iteration follows append order."""

    kind: str
    count: int = 0
    nbytes: int = 0
    on_disk = False

    def append(self, chunk) -> None:
        raise NotImplementedError

    def seal(self) -> None:
        pass

    def chunks(self, size: int = DEFAULT_CHUNK) -> Iterator:
        raise NotImplementedError

    def release(self) -> None:
        pass

    def keys(self) -> list:
        out = []
        for chunk in self.chunks():
            if self.kind == INT64:
                out.extend(int(k) for k in chunk)
            else:
                out.extend(chunk)
        return out


class MemoryBuffer(LevelBuffer):
    def __init__(self, kind: str):
        self.kind = kind
        self._parts = []
        self._data = None
        self.count = 0

    def append(self, chunk):
        if self._data is not None:
            raise RuntimeError("buffer already sealed")
        if len(chunk):
            self._parts.append(chunk)
            self.count += len(chunk)

    def seal(self):
        if self._data is not None:
            return
        if self.kind == INT64:
            self._data = np.concatenate(self._parts) if self._parts else _empty(INT64)
        else:
            self._data = [k for part in self._parts for k in part]
        self._parts = []

    def chunks(self, size=DEFAULT_CHUNK):
        self.seal()
        for start in range(0, self.count, size):
            yield self._data[start:start + size]

    def release(self):
        self._data = None
        self._parts = []


class DiskBuffer(LevelBuffer):
    """Raw little-endian records: 8 bytes per integer key, or a 4-byte length
    prefix followed by the key bytes."""

    on_disk = True

    def __init__(self, path: str, kind: str, tracker: SpillTracker):
        self.path = path
        self.kind = kind
        self.tracker = tracker
        self.count = 0
        self.nbytes = 0
        try:
            self._fh = open(path, "xb")
        except OSError as exc:
            raise SpillIOError(f"cannot create spill file ({exc.strerror})", path) from exc
        tracker.files_created += 1
        self._released = False

    def append(self, chunk):
        if self._fh is None:
            raise RuntimeError("buffer already sealed")
        if not len(chunk):
            return
        data = encode_records(chunk, self.kind)
        try:
            self._fh.write(data)
        except OSError as exc:
            raise SpillIOError(f"write failed ({exc.strerror})", self.path) from exc
        self.count += len(chunk)
        self.nbytes += len(data)
        self.tracker.grow(len(data))

    def seal(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def chunks(self, size=DEFAULT_CHUNK):
        self.seal()
        try:
            with open(self.path, "rb") as fh:
                if self.kind == INT64:
                    while True:
                        arr = np.fromfile(fh, dtype="<u8", count=size)
                        if not len(arr):
                            return
                        yield arr.astype(np.uint64, copy=False)
                else:
                    yield from self._read_strings(fh, size)
        except OSError as exc:
            raise SpillIOError(f"read failed ({exc.strerror})", self.path) from exc

    @staticmethod
    def _read_strings(fh, size):
        batch = []
        while True:
            head = fh.read(4)
            if not head:
                break
            (length,) = struct.unpack("<I", head)
            batch.append(fh.read(length))
            if len(batch) == size:
                yield batch
                batch = []
        if batch:
            yield batch

    def release(self):
        if self._released:
            return
        self._released = True
        if self._fh is not None:
            self._fh.close()
            self._fh = None
        try:
            os.unlink(self.path)
        except FileNotFoundError:
            pass
        self.tracker.shrink(self.nbytes)


class SourceBuffer(LevelBuffer):
    """The original input viewed as the level-0 key set."""

    def __init__(self, source: KeySource, count: int):
        self.source = source
        self.kind = source.kind
        self.count = count
        self.passes = 0

    def chunks(self, size=DEFAULT_CHUNK):
        self.passes += 1
        yield from self.source.chunks(size)


class RescanBuffer(LevelBuffer):
    """Virtual key set for level d: re-read the source and keep the keys that
    ``unplaced`` reports as missing from every level below d."""

    def __init__(self, origin: SourceBuffer, unplaced: Callable, count: int):
        self.origin = origin
        self.kind = origin.kind
        self.unplaced = unplaced
        self.count = count

    def chunks(self, size=DEFAULT_CHUNK):
        for chunk in self.origin.chunks(size):
            mask = self.unplaced(chunk)
            if self.kind == INT64:
                kept = chunk[mask]
            else:
                kept = [k for k, m in zip(chunk, mask) if m]
            if len(kept):
                yield kept


def spill_path(temp_dir: str, build_id: str, level: int) -> str:
    return os.path.join(temp_dir, f"bbmph.{build_id}.F{level}")


def next_level_sink(cfg, level: int, expected_count: float, n: int, kind: str,
                    tracker: SpillTracker, build_id: str) -> LevelBuffer:
    """Buffer that will receive the key set of ``level``.

    Disk-spill keeps a set in memory once its expected size is at most
    ``spill_to_memory_threshold * n``. Rescan-input never materializes key
    sets, so the build wires those up itself.
    """
    strategy = Strategy.parse(cfg.strategy)
    if strategy is Strategy.RESCAN_INPUT:
        raise ConfigError("rescan-input builds do not store key sets")
    if strategy is Strategy.DISK_SPILL and expected_count > cfg.spill_to_memory_threshold * n:
        temp_dir = cfg.temp_dir if cfg.temp_dir is not None else _default_temp_dir()
        return DiskBuffer(spill_path(temp_dir, build_id, level), kind, tracker)
    return MemoryBuffer(kind)


def _default_temp_dir():
    return tempfile.gettempdir()


def peak_spill_bytes(report) -> int:
    return report.peak_spill_bytes
