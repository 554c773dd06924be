import math

import numpy as np
import pytest

from bbmph import analysis
from bbmph.hashing import positions


@pytest.mark.parametrize("gamma,interval,expected", [
    (2, 512, 3.709),
    (1, 1024, 2.888),
    (1, 512, 3.058),
    (5, 512, 6.870),
])
def test_bits_per_key(gamma, interval, expected):
    assert analysis.predict_bits_per_key(gamma, interval) == pytest.approx(expected, abs=1e-3)


def test_peak_memory_ratio():
    assert analysis.predict_peak_memory_ratio(1) == 1.0
    assert analysis.predict_peak_memory_ratio(1 / math.log(2)) == pytest.approx(1.0, abs=1e-12)
    assert analysis.predict_peak_memory_ratio(2) == pytest.approx(1.2131, abs=1e-4)


@pytest.mark.parametrize("gamma", [1.0, 1.2, 1 / math.log(2), 1.6, 2.0, 5.0, 10.0])
def test_peak_memory_ratio_matches_simulated_trace(gamma):
    # m(d) = sum_{i<d} |A_i| + 2|A_d| with expected level sizes, relative to the final size
    q = 1 - math.exp(-1 / gamma)
    sizes = [gamma * q**d for d in range(400)]
    total = sum(sizes)
    done, peak = 0.0, 0.0
    for s in sizes:
        peak = max(peak, done + 2 * s)
        done += s
    assert analysis.predict_peak_memory_ratio(gamma) == pytest.approx(peak / total, rel=1e-6)
    trace = analysis.predict_memory_trace(gamma, 400)
    assert max(trace) == pytest.approx(peak / total, rel=1e-6)


def test_level_fraction():
    assert analysis.predict_level_fraction(2, 0) == 1
    assert analysis.predict_level_fraction(1, 25) == pytest.approx(1.04e-5, rel=0.01)
    assert analysis.predict_level_fraction(2, 1) == pytest.approx(0.3935, abs=1e-4)
    with pytest.raises(ValueError):
        analysis.predict_level_fraction(2, -1)


def test_level_fraction_against_one_simulated_level():
    n = 10**6
    keys = np.arange(n, dtype=np.uint64) * np.uint64(0x9E3779B97F4A7C15)
    counts = np.bincount(positions(keys, 0, 77, 2 * n), minlength=2 * n)
    collided = 1 - np.count_nonzero(counts == 1) / n
    lo, hi = analysis.binomial_band(analysis.predict_level_fraction(2, 1), n)
    assert lo <= collided <= hi


def test_peak_spill_ratio():
    assert analysis.predict_peak_spill_ratio(1) == pytest.approx(1.0317, abs=1e-4)
    assert analysis.predict_peak_spill_ratio(2) == pytest.approx(0.548, abs=1e-3)
    assert analysis.predict_peak_spill_ratio(5) == pytest.approx(0.214, abs=1e-3)


def test_gamma_below_one_rejected():
    for fn in (analysis.predict_bits_per_key, analysis.predict_peak_memory_ratio,
               analysis.predict_peak_spill_ratio):
        with pytest.raises(ValueError):
            fn(0.5)


def test_size_grows_with_gamma():
    gammas = np.linspace(1, 20, 400)
    sizes = [analysis.predict_core_bits_per_key(g) for g in gammas]
    assert sizes[0] == pytest.approx(math.e)
    assert all(b > a for a, b in zip(sizes, sizes[1:]))
    # gamma * e^(1/gamma) bottoms out at gamma = 1 over all gamma > 0
    below = [g * math.exp(1 / g) for g in np.linspace(0.05, 0.999, 200)]
    assert min(below) > math.e


@pytest.mark.parametrize("gamma", [1, 1.5, 2, 5, 10])
def test_geometric_series_identity(gamma):
    q = 1 - math.exp(-1 / gamma)
    partial = sum(gamma * q**d for d in range(2000))
    assert abs(partial - analysis.predict_core_bits_per_key(gamma)) < 1e-9


def test_prediction_bundle():
    p = analysis.predict(2)
    assert p.bits_per_key_total == analysis.predict_bits_per_key(2, 512)
    assert p.level_fraction(3) == analysis.predict_level_fraction(2, 3)
    assert p.mean_level == pytest.approx(math.exp(0.5))
    for value in (p.bits_per_key_core, p.bits_per_key_total, p.peak_memory_ratio_R,
                  p.peak_spill_ratio, p.mean_level):
        assert value > 0 and math.isfinite(value)
