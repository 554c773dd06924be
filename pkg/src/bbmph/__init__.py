"""Minimal perfect hashing with cascading collision-free bit arrays."""

from .bitvector import AtomicBitPair, RankedBits
from .codec import decode, encode, load, save
from .core import FALLBACK, BuildConfig, BuildReport, Mphf, build, query, query_level
from .errors import (
    ConfigError,
    DuplicateKeys,
    EmptyInput,
    FormatError,
    MphfError,
    NotInFallback,
    SpillIOError,
    TruncatedError,
    VersionError,
)
from .hashing import HashSeed, hash_level, position
from .keys import (
    ArrayKeys,
    BytesKeys,
    IterKeys,
    KeySource,
    LineFileKeys,
    generate_keys,
    generate_strings,
)
from .spill import Strategy

__version__ = "0.1.0"
