"""Uniform midrise quantizer and conditional statistics of one observation.

The quantizer maps a real amplitude to one of K = 2**bits levels placed at
odd multiples of step/2, saturating at +-(K - 1) * step / 2. Inputs exactly
on a decision threshold quantize upward (regions are half-open on the
right), and sign(0) counts as positive, so results are deterministic.

The conditional level probabilities are differences of Gaussian tails. They
are computed in log space by subtracting the smaller tail from the larger
one, which keeps relative accuracy even when a level is hundreds of noise
standard deviations away from the input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import QuantizerSpec, q_function

__all__ = [
    "LevelStats",
    "quantize",
    "quantize_index",
    "level_value",
    "level_values",
    "interior_thresholds",
    "thresholds",
    "level_probability",
    "log_level_probability",
    "log_level_probs",
    "cond_mean",
    "cond_variance",
    "level_stats",
]


@dataclass(frozen=True, eq=False)
class LevelStats:
    """Per-level probabilities and moments of one quantized observation."""

    probs: np.ndarray
    mean: float
    variance: float


def level_values(spec: QuantizerSpec) -> np.ndarray:
    """All K output levels, strictly increasing and symmetric about 0."""
    k = np.arange(1, spec.n_levels + 1)
    return (k - (spec.n_levels + 1) / 2.0) * spec.step


def level_value(k: int, spec: QuantizerSpec) -> float:
    """Output level for 1-based level index k."""
    _check_index(k, spec)
    return (k - (spec.n_levels + 1) / 2.0) * spec.step


def interior_thresholds(spec: QuantizerSpec) -> np.ndarray:
    """The K - 1 finite cell boundaries (k - K/2) * step, k = 1 .. K-1.

    Every other routine derives its cell boundaries from this array, so
    adjacent cells share the identical boundary float.
    """
    k = np.arange(1, spec.n_levels)
    return (k - spec.n_levels / 2.0) * spec.step


def thresholds(k: int, spec: QuantizerSpec):
    """Decision interval (lower, upper) of level k; outer cells extend to inf."""
    _check_index(k, spec)
    interior = interior_thresholds(spec)
    lo = -math.inf if k == 1 else float(interior[k - 2])
    up = math.inf if k == spec.n_levels else float(interior[k - 1])
    return lo, up


def _check_index(k, spec):
    if int(k) != k or not 1 <= k <= spec.n_levels:
        raise IndexError(f"level index {k} outside 1..{spec.n_levels}")


def quantize_index(y, spec: QuantizerSpec):
    """1-based level index hit by amplitude(s) y. Threshold inputs go upward."""
    return np.searchsorted(interior_thresholds(spec), np.asarray(y, dtype=float),
                           side="right") + 1


def quantize(y, spec: QuantizerSpec):
    """Quantizer transfer law: amplitude in, output level value out."""
    vals = level_values(spec)
    return vals[quantize_index(y, spec) - 1]


def _log1mexp(t):
    """log(1 - exp(t)) for t <= 0 without cancellation."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.log(-np.expm1(t))       # accurate for t near 0
        large = np.log1p(-np.exp(t))       # accurate for very negative t
    return np.where(t > -math.log(2.0), small, large)


def log_level_probs(x, noise_std, spec: QuantizerSpec) -> np.ndarray:
    """ln P(level k | input x) for all K levels, appended as a last axis.

    ``x`` and ``noise_std`` broadcast against each other. Each probability
    is a difference of two Gaussian tails; the form evaluated is chosen per
    cell so that the two tails are subtracted where both are small, which
    keeps deep-tail values exact in log space.
    """
    x = np.asarray(x, dtype=float)[..., None]
    s = np.asarray(noise_std, dtype=float)[..., None]
    interior = interior_thresholds(spec)
    tau_low = np.concatenate(([-np.inf], interior))
    tau_up = np.concatenate((interior, [np.inf]))
    lo = (tau_low - x) / s
    up = (tau_up - x) / s
    # Cell above the input: work with the two upper tails Q(lo), Q(up);
    # cell below: with the lower tails Phi(lo), Phi(up).
    above = lo + up > 0
    big = special.log_ndtr(np.where(above, -lo, up))
    small = special.log_ndtr(np.where(above, -up, lo))
    return big + _log1mexp(small - big)


def log_level_probability(k: int, x, noise_std, spec: QuantizerSpec):
    """ln P(level k | input x) for a single 1-based level index."""
    _check_index(k, spec)
    return log_level_probs(x, noise_std, spec)[..., k - 1]


def level_probability(k: int, x, noise_std, spec: QuantizerSpec):
    """P(level k | input x) = Q((tau_low - x)/s) - Q((tau_up - x)/s)."""
    return np.exp(log_level_probability(k, x, noise_std, spec))


def _upper_threshold_tails(x, noise_std, spec):
    """Q((tau_up(k) - x)/s) for the K-1 interior thresholds."""
    x = np.asarray(x, dtype=float)[..., None]
    s = np.asarray(noise_std, dtype=float)[..., None]
    return q_function((interior_thresholds(spec) - x) / s)


def cond_mean(x, noise_std, spec: QuantizerSpec):
    """Conditional mean of the quantizer output given input amplitude x.

    Closed form: step * (sum_k Q((tau_up(k) - x)/s) - (K - 1)/2), summing
    over the K - 1 interior thresholds.
    """
    tails = _upper_threshold_tails(x, noise_std, spec)
    return spec.step * (tails.sum(axis=-1) - (spec.n_levels - 1) / 2.0)


def cond_variance(x, noise_std, spec: QuantizerSpec):
    """Conditional variance of the quantizer output given input amplitude x.

    Closed form: step**2 * (sum_k (2k - K) Q((tau_up(k) - x)/s)
    + ((K - 1)/2)**2) - cond_mean**2, clipped at 0 against rounding.
    """
    tails = _upper_threshold_tails(x, noise_std, spec)
    k = np.arange(1, spec.n_levels)
    second = spec.step ** 2 * (
        ((2 * k - spec.n_levels) * tails).sum(axis=-1)
        + ((spec.n_levels - 1) / 2.0) ** 2
    )
    mu = cond_mean(x, noise_std, spec)
    return np.maximum(second - mu ** 2, 0.0)


def level_stats(x: float, noise_std: float, spec: QuantizerSpec) -> LevelStats:
    """Bundle of level probabilities and conditional moments for one input."""
    probs = np.exp(log_level_probs(float(x), float(noise_std), spec))
    return LevelStats(
        probs=probs,
        mean=float(cond_mean(float(x), float(noise_std), spec)),
        variance=float(cond_variance(float(x), float(noise_std), spec)),
    )
