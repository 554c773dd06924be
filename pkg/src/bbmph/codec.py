"""Binary image of an :class:`~bbmph.core.Mphf`.

Layout (all integers little-endian, no padding), see docs/FORMAT.md::

    magic           8 bytes  b"BBMPH001"
    version         u32
    n               u64
    gamma           f64
    seed            u64
    rank_interval   u32
    level_count     u32
    per level:
        bit_count   u64
        words       u64 * ceil(bit_count / 64)
        checkpoints u64 * ceil(bit_count / rank_interval)
    fallback_count  u64
    per fallback entry:
        key_length  u32
        key         key_length bytes
        index       u64          (0-based)
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .bitvector import RankedBits
from .core import Mphf
from .errors import FormatError, TruncatedError, VersionError

MAGIC = b"BBMPH001"
VERSION = 1

_HEAD = struct.Struct("<8sIQdQII")
_U64 = struct.Struct("<Q")
_U32 = struct.Struct("<I")

HEADER_BYTES = _HEAD.size


def level_descriptor_bytes(level_count: int) -> int:
    return 8 * level_count


def fallback_payload_bytes(m: Mphf) -> int:
    """Bytes taken by the fallback count and its entries."""
    return 8 + sum(4 + len(k) + 8 for k in m.fallback)


def overhead_bytes(m: Mphf) -> int:
    """Everything in the image except level words and checkpoints."""
    return HEADER_BYTES + level_descriptor_bytes(len(m.levels)) + fallback_payload_bytes(m)


def encode(m: Mphf) -> bytes:
    parts = [_HEAD.pack(MAGIC, VERSION, m.n, m.gamma, m.seed, m.rank_interval, len(m.levels))]
    for level in m.levels:
        if level.interval != m.rank_interval:
            raise ValueError("level rank interval differs from the structure's")
        parts.append(_U64.pack(level.size))
        parts.append(level.words.astype("<u8").tobytes())
        parts.append(level.checkpoints.astype("<u8").tobytes())
    parts.append(_U64.pack(len(m.fallback)))
    for key, index in sorted(m.fallback.items(), key=lambda kv: kv[1]):
        parts.append(_U32.pack(len(key)))
        parts.append(key)
        parts.append(_U64.pack(index))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, nbytes: int, what: str) -> memoryview:
        end = self.pos + nbytes
        if end > len(self.data):
            raise TruncatedError(f"image ends inside {what}", len(self.data))
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def u64(self, what):
        return _U64.unpack(self.take(8, what))[0]

    def u32(self, what):
        return _U32.unpack(self.take(4, what))[0]

    def u64_array(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * count, what), dtype="<u8").astype(np.uint64)


def decode(data: bytes) -> Mphf:
    data = bytes(data)
    if data[:len(MAGIC)] != MAGIC[:len(data)]:
        raise FormatError(f"bad magic {data[:len(MAGIC)]!r}")
    r = _Reader(data)
    r.take(len(MAGIC), "header")
    version = r.u32("header")
    if version != VERSION:
        raise VersionError(f"unsupported format version {version} (expected {VERSION})")
    n = r.u64("header")
    (gamma,) = struct.unpack("<d", r.take(8, "header"))
    seed = r.u64("header")
    interval = r.u32("header")
    level_count = r.u32("header")
    if interval == 0:
        raise FormatError("rank interval is zero")

    levels = []
    for d in range(level_count):
        bits = r.u64(f"level {d} size")
        if bits == 0:
            raise FormatError(f"level {d} is empty")
        nwords = -(-bits // 64)
        ncheck = -(-bits // interval)
        if 8 * (nwords + ncheck) > len(data) - r.pos:
            raise TruncatedError(f"image ends inside level {d}", len(data))
        words = r.u64_array(nwords, f"level {d} words")
        checkpoints = r.u64_array(ncheck, f"level {d} checkpoints")
        try:
            levels.append(RankedBits(words, bits, interval, checkpoints.astype(np.int64)))
        except ValueError as exc:
            raise FormatError(f"level {d}: {exc}") from None

    fallback = {}
    count = r.u64("fallback count")
    if 12 * count > len(data) - r.pos:
        raise TruncatedError("image ends inside fallback table", len(data))
    for _ in range(count):
        klen = r.u32("fallback key length")
        key = bytes(r.take(klen, "fallback key"))
        index = r.u64("fallback index")
        if key in fallback:
            raise FormatError(f"fallback key {key!r} repeated")
        if index >= n:
            raise FormatError(f"fallback index {index} out of range")
        fallback[key] = index
    if sorted(fallback.values()) != list(range(n - count, n)):
        raise FormatError("fallback indices do not cover the tail of the range")
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after image")
    try:
        return Mphf(levels, fallback, n, gamma, seed, interval)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def save(m: Mphf, path) -> int:
    """Write the image atomically (temp file + rename). Returns its size."""
    data = encode(m)
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".bbmph-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(data)


def load(path) -> Mphf:
    with open(path, "rb") as fh:
        return decode(fh.read())
