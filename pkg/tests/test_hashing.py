import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from bbmph.hashing import (
    HashSeed,
    hash_level,
    hash_many,
    key_bytes,
    position,
    positions,
)

M64 = (1 << 64) - 1


def oracle_hash(key, level, seed):
    """Straight transcription of docs/FORMAT.md, kept apart from the package."""

    def fin(x):
        x ^= x >> 30
        x = x * 0xBF58476D1CE4E5B9 & M64
        x ^= x >> 27
        x = x * 0x94D049BB133111EB & M64
        return x ^ (x >> 31)

    if isinstance(key, int):
        key = struct.pack("<Q", key)
    x = fin((seed + (level + 1) * 0x9E3779B97F4A7C15) & M64) ^ (len(key) * 0xC2B2AE3D27D4EB4F & M64)
    for (word,) in struct.iter_unpack("<Q", key + b"\0" * (-len(key) % 8)):
        x ^= word
        x = x * 0x9FB21C651E98DF25 & M64
        x ^= x >> 32
    return fin(x)


# values produced by oracle_hash; they pin the format
FROZEN = [
    ((0, 0, 0), 0xDA3BF5BA3BBE139F),
    ((12345, 0, 0), 0x9B6D597EFCDAB39A),
    ((12345, 1, 0), 0xCCFB719E3308061A),
    ((12345, 0, 42), 0x5EFEB2163F11A9A1),
    ((b"hello", 3, 7), 0xE56CB0F01C43BDBC),
    ((b"", 0, 0), 0x48218226FF3CD4BF),
    ((b"abcdefghijklmnopqr", 2, 99), 0xC2223CFE4D9F1533),
]


@pytest.mark.parametrize("args,expected", FROZEN)
def test_frozen_values(args, expected):
    assert oracle_hash(*args) == expected
    assert hash_level(*args) == expected


def test_position_mod_six():
    # 0x9B6D597EFCDAB39A % 6 == 4, worked out with the oracle above
    assert position(12345, 0, HashSeed(0), 6) == 0x9B6D597EFCDAB39A % 6 == 4


def test_deterministic():
    assert hash_level(b"key", 5, HashSeed(9)) == hash_level(b"key", 5, HashSeed(9))
    assert hash_level(77, 0, 3) == hash_level(77, 0, HashSeed(3))


def test_int_key_is_its_little_endian_bytes():
    for k in (0, 1, 255, 2**63, M64, 0x0123456789ABCDEF):
        assert hash_level(k, 2, 11) == hash_level(k.to_bytes(8, "little"), 2, 11)


def test_position_edge_cases():
    assert all(position(k, 3, 1, 1) == 0 for k in range(100))
    with pytest.raises(ValueError):
        position(1, 0, 0, 0)
    with pytest.raises(ValueError):
        positions(np.arange(3, dtype=np.uint64), 0, 0, 0)


def test_bad_inputs():
    with pytest.raises(ValueError):
        key_bytes(-1)
    with pytest.raises(ValueError):
        key_bytes(2**64)
    with pytest.raises(ValueError):
        HashSeed(2**64)


@given(st.binary(min_size=1, max_size=40), st.integers(0, 30), st.integers(0, M64))
@settings(max_examples=200)
def test_every_byte_matters(key, level, seed):
    base = hash_level(key, level, seed)
    for i in range(len(key)):
        flipped = bytearray(key)
        flipped[i] ^= 0x01
        assert hash_level(bytes(flipped), level, seed) != base


def test_trailing_zero_bytes_change_hash():
    assert hash_level(b"ab", 0, 0) != hash_level(b"ab\0", 0, 0)
    assert hash_level(b"", 0, 0) != hash_level(b"\0", 0, 0)


@given(st.lists(st.integers(0, M64), max_size=50), st.integers(0, 40), st.integers(0, M64))
def test_batch_int_matches_scalar(keys, level, seed):
    arr = np.array(keys, dtype=np.uint64)
    expected = [oracle_hash(k, level, seed) for k in keys]
    assert [int(v) for v in hash_many(arr, level, seed)] == expected


@given(st.lists(st.binary(max_size=30), max_size=40), st.integers(0, 40), st.integers(0, M64))
def test_batch_bytes_matches_scalar(keys, level, seed):
    expected = [oracle_hash(k, level, seed) for k in keys]
    assert [int(v) for v in hash_many(keys, level, seed)] == expected
    size = 1 + seed % 1000
    assert [int(v) for v in positions(keys, level, seed, size)] == [e % size for e in expected]


def random_keys(n, seed=0):
    return np.random.default_rng(seed).integers(0, 2**63, size=n, dtype=np.uint64) * np.uint64(2) + np.uint64(1)


def test_bucket_occupancy_is_poisson():
    n, m = 10**5, 2 * 10**5
    counts = np.bincount(positions(random_keys(n), 0, 5, m), minlength=m)
    observed = np.bincount(np.minimum(counts, 4), minlength=5)
    pmf = [math.exp(-0.5) * 0.5**k / math.factorial(k) for k in range(4)]
    expected = np.array(pmf + [1 - sum(pmf)]) * m
    assert abs(observed[0] / m - math.exp(-0.5)) < 0.01
    assert stats.chisquare(observed, expected).pvalue > 0.001


def test_levels_are_independent():
    n, m = 10**5, 1000
    keys = random_keys(n, 1)
    p0 = positions(keys, 0, 0, m)
    p1 = positions(keys, 1, 0, m)
    # same slot at both levels happens with probability 1/m
    matches = int(np.sum(p0 == p1))
    mean, sd = n / m, math.sqrt(n * (1 / m) * (1 - 1 / m))
    assert abs(matches - mean) < 3 * sd

    # pairs that share a slot at level 0 share one at level 1 no more than chance
    order = np.argsort(p0, kind="stable")
    s0, s1 = p0[order], p1[order]
    same0 = s0[1:] == s0[:-1]
    both = int(np.sum(same0 & (s1[1:] == s1[:-1])))
    pairs = int(np.sum(same0))
    mean, sd = pairs / m, math.sqrt(pairs * (1 / m) * (1 - 1 / m))
    assert abs(both - mean) < 3 * sd + 1


@pytest.mark.parametrize("gamma", [1.0, 2.0, 5.0])
def test_placed_fraction_per_level(gamma):
    n = 20_000
    keys = random_keys(n, 2)
    m = math.ceil(gamma * n)
    target = math.exp(-1 / gamma)
    for level in range(40):
        counts = np.bincount(positions(keys, level, 123, m), minlength=m)
        placed = np.count_nonzero(counts == 1) / n
        assert abs(placed / target - 1) < 0.05, (level, placed)
