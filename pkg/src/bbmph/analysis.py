"""Closed-form expectations for structure size, construction memory and spill.

All predictors are expectations. Tests compare them with observed builds
through :func:`binomial_band`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .bitvector import DEFAULT_INTERVAL


def _check_gamma(gamma: float):
    if not gamma >= 1:
        raise ValueError(f"gamma must be >= 1, got {gamma}")


def placed_fraction(gamma: float) -> float:
    """Expected fraction of a level's keys that land alone in their slot."""
    return math.exp(-1.0 / gamma)


def collision_fraction(gamma: float) -> float:
    return -math.expm1(-1.0 / gamma)


def predict_core_bits_per_key(gamma: float) -> float:
    _check_gamma(gamma)
    return gamma * math.exp(1.0 / gamma)


def predict_bits_per_key(gamma: float, rank_interval: int = DEFAULT_INTERVAL) -> float:
    """Bits per key including one 64-bit rank counter per ``rank_interval`` bits."""
    return (1.0 + 64.0 / rank_interval) * predict_core_bits_per_key(gamma)


def predict_peak_memory_ratio(gamma: float) -> float:
    """Peak construction memory over final structure size.

    Level d needs every earlier array plus two arrays of the current size. For
    gamma <= 1/ln 2 that total grows with d toward the final size (ratio 1);
    above it the total shrinks from its start, 2*exp(-1/gamma) of the final size.
    """
    _check_gamma(gamma)
    return max(1.0, 2.0 * math.exp(-1.0 / gamma))


def predict_memory_trace(gamma: float, levels: int) -> list[float]:
    """Expected construction memory at levels 0..levels-1, relative to the final size."""
    _check_gamma(gamma)
    q = collision_fraction(gamma)
    p = placed_fraction(gamma)
    size = predict_core_bits_per_key(gamma)
    return [gamma * ((1 - q**d) / p + 2 * q**d) / size for d in range(levels)]


def predict_level_fraction(gamma: float, d: int) -> float:
    """Expected fraction of all keys still unplaced when level ``d`` starts."""
    if d < 0:
        raise ValueError(f"level must be non-negative, got {d}")
    return collision_fraction(gamma) ** d


def predict_peak_spill_ratio(gamma: float) -> float:
    """Peak spilled keys over input keys: the sets of levels 1 and 2 together."""
    _check_gamma(gamma)
    q = collision_fraction(gamma)
    return q + q * q


def predict_mean_level(gamma: float) -> float:
    """Expected number of levels probed per key (level index + 1)."""
    return math.exp(1.0 / gamma)


@dataclass(frozen=True)
class Prediction:
    gamma: float
    rank_interval: int
    bits_per_key_core: float
    bits_per_key_total: float
    peak_memory_ratio_R: float
    peak_spill_ratio: float
    mean_level: float

    def level_fraction(self, d: int) -> float:
        return predict_level_fraction(self.gamma, d)


def predict(gamma: float, rank_interval: int = DEFAULT_INTERVAL) -> Prediction:
    return Prediction(
        gamma=gamma,
        rank_interval=rank_interval,
        bits_per_key_core=predict_core_bits_per_key(gamma),
        bits_per_key_total=predict_bits_per_key(gamma, rank_interval),
        peak_memory_ratio_R=predict_peak_memory_ratio(gamma),
        peak_spill_ratio=predict_peak_spill_ratio(gamma),
        mean_level=predict_mean_level(gamma),
    )


def binomial_band(p: float, n: int, k: float = 3.0) -> tuple[float, float]:
    """``p +/- k`` standard deviations of a proportion observed over ``n`` trials."""
    sigma = math.sqrt(p * (1 - p) / n)
    return p - k * sigma, p + k * sigma
