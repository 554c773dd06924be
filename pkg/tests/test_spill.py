import os
import stat

import numpy as np
import pytest

from bbmph import BuildConfig, DuplicateKeys, SpillIOError, build, encode, generate_keys
from bbmph.analysis import collision_fraction
from bbmph.keys import BYTES, INT64
from bbmph.spill import (
    DiskBuffer,
    MemoryBuffer,
    SpillTracker,
    Strategy,
    next_level_sink,
    spill_path,
)
from bbmph.errors import ConfigError


def keys_of(n, seed=0):
    return generate_keys(n, seed).materialize().keys


def expected_peak_spill(level_sizes, gamma, n, threshold=0.02, record=8):
    """Replay the disk/memory choice from the recorded level sizes."""
    on_disk = [False]
    for size in level_sizes[:-1]:
        on_disk.append(size * collision_fraction(gamma) > threshold * n)
    sizes = list(level_sizes) + [0]
    disk = [record * s if flag else 0 for s, flag in zip(sizes, on_disk + [False])]
    # F_d is still on disk while F_{d+1} is written
    return max(a + b for a, b in zip(disk, disk[1:] + [0]))


def test_strategy_parse():
    assert Strategy.parse("rescan-input") is Strategy.RESCAN_INPUT
    with pytest.raises(ConfigError):
        Strategy.parse("tape")


@pytest.mark.parametrize("kind,chunks", [
    (INT64, [np.array([5, 1, 2**64 - 1], dtype=np.uint64), np.array([7], dtype=np.uint64)]),
    (BYTES, [[b"a", b"", b"xyz" * 40], [b"\0\n"]]),
])
def test_disk_buffer_roundtrip(tmp_path, kind, chunks):
    tracker = SpillTracker()
    buf = DiskBuffer(str(tmp_path / "f"), kind, tracker)
    flat = []
    for c in chunks:
        buf.append(c)
        flat.extend(int(k) for k in c) if kind == INT64 else flat.extend(c)
    assert buf.keys() == flat
    assert [len(c) for c in buf.chunks(2)][0] == 2
    assert tracker.peak == buf.nbytes == os.path.getsize(buf.path)
    buf.release()
    buf.release()
    assert not os.path.exists(buf.path)
    assert tracker.live == 0


def test_memory_buffer():
    buf = MemoryBuffer(INT64)
    buf.append(np.array([3, 4], dtype=np.uint64))
    buf.append(np.array([], dtype=np.uint64))
    assert buf.keys() == [3, 4]
    with pytest.raises(RuntimeError):
        buf.append(np.array([1], dtype=np.uint64))


def test_sink_threshold(tmp_path):
    cfg = BuildConfig(temp_dir=str(tmp_path))
    tracker = SpillTracker()
    big = next_level_sink(cfg, 1, 1000, 10_000, INT64, tracker, "t")
    small = next_level_sink(cfg, 2, 200, 10_000, INT64, tracker, "t")
    assert isinstance(big, DiskBuffer) and big.path == spill_path(str(tmp_path), "t", 1)
    assert isinstance(small, MemoryBuffer)
    big.release()
    mem = next_level_sink(BuildConfig(strategy="in-memory"), 1, 10**6, 10, INT64, tracker, "t")
    assert isinstance(mem, MemoryBuffer)
    with pytest.raises(ConfigError):
        next_level_sink(BuildConfig(strategy="rescan-input"), 1, 1, 1, INT64, tracker, "t")


@pytest.mark.parametrize("workers", [1, 4])
def test_strategies_agree(workers, tmp_path):
    keys = keys_of(40_000, 3)
    images = {encode(build(keys, strategy=s, workers=workers, temp_dir=str(tmp_path), chunk_size=5000)[0])
              for s in ("disk-spill", "rescan-input", "in-memory")}
    assert len(images) == 1
    assert list(tmp_path.iterdir()) == []


def test_rescan_passes():
    keys = keys_of(20_000, 1)
    _, rep = build(keys, strategy="rescan-input")
    assert rep.fallback_count == 0
    assert rep.source_passes == rep.levels
    assert rep.peak_spill_bytes == 0 and rep.spill_files == 0
    _, rep = build(keys, strategy="rescan-input", gamma=1, max_levels=3)
    assert rep.fallback_count > 0
    assert rep.source_passes == rep.levels + 1


def test_two_pass_strategies_read_twice_per_first_level():
    _, rep = build(keys_of(5000), strategy="disk-spill")
    assert rep.source_passes == 2


@pytest.mark.parametrize("gamma", [1.0, 2.0, 5.0])
def test_peak_spill_matches_level_sizes(gamma, tmp_path):
    n = 200_000
    _, rep = build(keys_of(n, 7), gamma=gamma, temp_dir=str(tmp_path))
    assert rep.peak_spill_bytes == expected_peak_spill(rep.level_sizes, gamma, n)
    assert rep.spill_files >= 1
    _, mem = build(keys_of(n, 7), gamma=gamma, strategy="in-memory")
    assert mem.peak_spill_bytes == 0 and mem.spill_files == 0


def test_string_keys_spill(tmp_path):
    keys = [f"k{i:07d}".encode() for i in range(30_000)]
    m, rep = build(keys, temp_dir=str(tmp_path))
    assert rep.peak_spill_bytes > 0
    assert np.array_equal(np.sort(m.query_many(keys)), np.arange(len(keys)))
    assert list(tmp_path.iterdir()) == []


def test_files_removed_on_error(tmp_path):
    keys = np.concatenate([keys_of(50_000), keys_of(50_000)[:100]])
    with pytest.raises(DuplicateKeys):
        build(keys, temp_dir=str(tmp_path))
    assert list(tmp_path.iterdir()) == []


def test_missing_temp_dir(tmp_path):
    missing = tmp_path / "nope"
    with pytest.raises(SpillIOError) as info:
        build(keys_of(10_000), temp_dir=str(missing))
    assert str(missing) in info.value.path


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_read_only_temp_dir(tmp_path):
    tmp_path.chmod(stat.S_IRUSR | stat.S_IXUSR)
    try:
        with pytest.raises(SpillIOError):
            build(keys_of(10_000), temp_dir=str(tmp_path))
    finally:
        tmp_path.chmod(stat.S_IRWXU)


def test_temp_file_name_taken(tmp_path, monkeypatch):
    import bbmph.core as core
    monkeypatch.setattr(core, "_build_ids", iter(["fixed"]))
    squatter = tmp_path / f"bbmph.{os.getpid()}-fixed.F1"
    squatter.write_bytes(b"keep me")
    with pytest.raises(SpillIOError):
        build(keys_of(10_000), temp_dir=str(tmp_path))
    assert squatter.read_bytes() == b"keep me"
