"""Benchmark / driver command.

    bbmph --keys 1000000 --gamma 2 --threads 1 --bench
    bbmph --strings 100000,18 --output words.mphf
    bbmph --input keys.txt --nodisk

Prints a human-readable table followed by ``key=value`` lines.
Exit codes: 0 ok, 2 configuration, 3 I/O, 4 duplicate keys.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import analysis, codec
from .core import BuildConfig, build
from .errors import ConfigError, DuplicateKeys, EmptyInput, SpillIOError
from .keys import INT64, LineFileKeys, generate_keys, generate_strings
from .spill import Strategy

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DUPLICATES = 0, 2, 3, 4

SCALAR_QUERY_SAMPLE = 20_000


@dataclass
class RunSpec:
    key_count: Optional[int] = None
    input_path: Optional[str] = None
    strings: Optional[tuple[int, int]] = None
    gamma: float = 2.0
    threads: int = 1
    bench: bool = False
    nodisk: bool = False
    onthefly: bool = False
    in_memory: bool = False
    seed: int = 0
    rank_interval: int = 512
    max_levels: int = 25
    output: Optional[str] = None
    temp_dir: Optional[str] = None

    def key_kind(self) -> str:
        origins = [self.key_count is not None, self.input_path is not None, self.strings is not None]
        if sum(origins) != 1:
            raise ConfigError("select exactly one of --keys, --input, --strings")
        if self.key_count is not None:
            return "int64-synthetic"
        if self.input_path is not None:
            return "strings-from-file"
        return "strings-synthetic"

    def strategy(self) -> str:
        if self.nodisk and self.in_memory:
            raise ConfigError("--nodisk and --in-memory are mutually exclusive")
        if self.nodisk:
            return Strategy.RESCAN_INPUT.value
        if self.in_memory:
            return Strategy.IN_MEMORY.value
        return Strategy.DISK_SPILL.value


def _source(spec: RunSpec):
    kind = spec.key_kind()
    if kind == "int64-synthetic":
        if spec.key_count < 1:
            raise ConfigError(f"--keys must be at least 1, got {spec.key_count}")
        keys = generate_keys(spec.key_count, spec.seed)
        return keys if spec.onthefly else keys.materialize()
    if spec.onthefly:
        raise ConfigError("--onthefly only applies to generated keys")
    if kind == "strings-synthetic":
        n, length = spec.strings
        return generate_strings(n, length, spec.seed)
    if not os.path.isfile(spec.input_path):
        raise FileNotFoundError(f"input file not found: {spec.input_path}")
    return LineFileKeys(spec.input_path)


def _all_keys(source):
    if source.kind == INT64:
        return np.concatenate(list(source.chunks()))
    return [k for chunk in source.chunks() for k in chunk]


def run(spec: RunSpec, out=None) -> tuple[int, dict]:
    """Build (and optionally benchmark) per ``spec``; returns (exit code, report)."""
    out = out or sys.stdout
    try:
        return EXIT_OK, _run(spec, out)
    except (ConfigError, EmptyInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, {}
    except DuplicateKeys as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DUPLICATES, {}
    except (SpillIOError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO, {}


def _run(spec: RunSpec, out) -> dict:
    cfg = BuildConfig(gamma=spec.gamma, workers=spec.threads, max_levels=spec.max_levels,
                      rank_interval=spec.rank_interval, strategy=spec.strategy(),
                      seed=spec.seed, temp_dir=spec.temp_dir)
    source = _source(spec)
    if spec.temp_dir is not None and not os.path.isdir(spec.temp_dir):
        raise SpillIOError("temp dir does not exist", spec.temp_dir)

    t0 = time.perf_counter()
    mphf, rep = build(source, cfg)
    build_s = time.perf_counter() - t0
    n = mphf.n
    pred = analysis.predict(cfg.gamma, cfg.rank_interval)

    placed_levels = sum((d + 1) * w for d, w in enumerate(rep.level_weights))
    mean_level = (placed_levels + (len(rep.level_weights) + 1) * rep.fallback_count) / n
    report = {
        "n": n,
        "key_kind": spec.key_kind(),
        "gamma": cfg.gamma,
        "threads": cfg.workers,
        "strategy": cfg.strategy,
        "rank_interval": cfg.rank_interval,
        "levels": rep.levels,
        "fallback_count": rep.fallback_count,
        "bits_per_key": mphf.bits_per_key,
        "bits_per_key_predicted": pred.bits_per_key_total,
        "level0_fraction": rep.level_weights[0] / n,
        "level0_fraction_predicted": analysis.placed_fraction(cfg.gamma),
        "mean_level": mean_level,
        "mean_level_predicted": pred.mean_level,
        "peak_bits_in_memory": rep.peak_bits_in_memory,
        "peak_memory_ratio": rep.peak_bits_in_memory / mphf.core_bits,
        "peak_memory_ratio_predicted": pred.peak_memory_ratio_R,
        "peak_spill_bytes": rep.peak_spill_bytes,
        "build_seconds": build_s,
    }
    if source.kind == INT64:
        report["peak_spill_ratio"] = rep.peak_spill_bytes / (8 * n)
        report["peak_spill_ratio_predicted"] = (
            pred.peak_spill_ratio if cfg.strategy == Strategy.DISK_SPILL.value else 0.0)

    if spec.bench:
        keys = _all_keys(source)
        order = np.random.default_rng(spec.seed).permutation(n)
        shuffled = keys[order] if isinstance(keys, np.ndarray) else [keys[i] for i in order]
        t0 = time.perf_counter()
        idx = mphf.query_many(shuffled)
        report["query_ns"] = (time.perf_counter() - t0) / n * 1e9
        if not np.array_equal(np.sort(idx), np.arange(n)):
            raise AssertionError("query results are not a permutation of [0, n)")
        sample = shuffled[:SCALAR_QUERY_SAMPLE]
        sample = [int(k) for k in sample] if isinstance(sample, np.ndarray) else sample
        t0 = time.perf_counter()
        for key in sample:
            mphf.query(key)
        report["query_ns_scalar"] = (time.perf_counter() - t0) / len(sample) * 1e9

    if spec.output:
        size = codec.save(mphf, spec.output)
        report["file_bytes"] = size
        report["file_bits_per_key"] = 8 * (size - codec.overhead_bytes(mphf)) / n

    _print_report(report, out)
    return report


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _print_report(report: dict, out):
    rows = [
        ("bits/key", "bits_per_key"),
        ("level-0 fraction", "level0_fraction"),
        ("mean level + 1", "mean_level"),
        ("peak memory / size", "peak_memory_ratio"),
        ("peak spill / input", "peak_spill_ratio"),
    ]
    print(f"{'metric':<22}{'observed':>14}{'expected':>14}", file=out)
    for label, key in rows:
        if key in report:
            print(f"{label:<22}{_fmt(report[key]):>14}{_fmt(report[key + '_predicted']):>14}", file=out)
    print(file=out)
    for key, value in report.items():
        print(f"{key}={_fmt(value)}", file=out)


def _strings_arg(text: str) -> tuple[int, int]:
    try:
        n, length = (int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected N,LEN") from None
    return n, length


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bbmph", description="Build and benchmark a minimal perfect hash.")
    origin = p.add_mutually_exclusive_group(required=True)
    origin.add_argument("--keys", type=int, metavar="N", help="N pseudo-random distinct 64-bit keys")
    origin.add_argument("--input", metavar="FILE", help="one key per line")
    origin.add_argument("--strings", type=_strings_arg, metavar="N,LEN",
                        help="N distinct random lowercase words of LEN bytes")
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--max-levels", type=int, default=25)
    p.add_argument("--rank-interval", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bench", action="store_true", help="time queries over all keys")
    p.add_argument("--nodisk", action="store_true", help="re-read the input at every level")
    p.add_argument("--in-memory", action="store_true", help="keep leftover keys in RAM")
    p.add_argument("--onthefly", action="store_true", help="stream generated keys, never store them")
    p.add_argument("--output", metavar="FILE", help="write the encoded structure")
    p.add_argument("--temp-dir", metavar="DIR")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    if args.seed < 0 or args.seed >= 2**64:
        print("error: --seed must be in [0, 2**64)", file=sys.stderr)
        return EXIT_CONFIG
    spec = RunSpec(
        key_count=args.keys, input_path=args.input, strings=args.strings,
        gamma=args.gamma, threads=args.threads, bench=args.bench, nodisk=args.nodisk,
        onthefly=args.onthefly, in_memory=args.in_memory, seed=args.seed,
        rank_interval=args.rank_interval, max_levels=args.max_levels,
        output=args.output, temp_dir=args.temp_dir,
    )
    code, _ = run(spec)
    return code


if __name__ == "__main__":
    sys.exit(main())
