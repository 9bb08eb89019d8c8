"""Shared domain types and scalar numerics.

Everything downstream (quantizer statistics, detection PMFs, SER sums)
works with probabilities that can be far below the double-precision
underflow threshold, so the primitives here expose log-space variants
and the containers keep log-probabilities as their primary storage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "Constellation",
    "QuantizerSpec",
    "SystemConfig",
    "DetectionPmf",
    "DecisionRule",
    "q_function",
    "log_q_function",
    "log_multinomial_coeff",
    "log_multinomial_coeff_rows",
]

_SQRT2 = math.sqrt(2.0)


def q_function(x):
    """Gaussian upper-tail probability Q(x) = P(Z > x), Z ~ N(0, 1).

    Evaluated through ``erfc`` so deep tails saturate to 0 without
    producing NaN. Accepts scalars or arrays.
    """
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / _SQRT2)


def log_q_function(x):
    """ln Q(x), accurate far into the tail (Q(40) ~ 1e-350 is fine)."""
    return special.log_ndtr(-np.asarray(x, dtype=float))


def log_multinomial_coeff(counts) -> float:
    """ln of the multinomial coefficient n! / (c_1! ... c_K!).

    ``counts`` is a sequence of non-negative integers. Computed with
    log-gamma, exact to better than 1e-10 relative error for n <= 1024.
    """
    counts = np.asarray(counts)
    if counts.ndim != 1 or counts.size == 0:
        raise ValueError("counts must be a non-empty 1-D sequence")
    if np.any(counts < 0) or not np.issubdtype(counts.dtype, np.integer):
        raise ValueError("counts must be non-negative integers")
    n = int(counts.sum())
    return float(math.lgamma(n + 1) - sum(math.lgamma(int(c) + 1) for c in counts))


def log_multinomial_coeff_rows(count_matrix: np.ndarray) -> np.ndarray:
    """Row-wise ``log_multinomial_coeff`` for an (m, K) integer matrix."""
    count_matrix = np.asarray(count_matrix)
    n = count_matrix.sum(axis=1)
    return special.gammaln(n + 1) - special.gammaln(count_matrix + 1).sum(axis=1)


@dataclass(frozen=True)
class Constellation:
    """Ordered real amplitude levels of one quadrature component.

    The Cartesian square of ``levels`` forms the complex square-QAM
    alphabet; the average QAM symbol power is ``2 * mean(levels**2)``.
    """

    levels: tuple

    def __post_init__(self):
        levels = tuple(float(v) for v in self.levels)
        if len(levels) < 2:
            raise ValueError("constellation needs at least 2 levels")
        if not all(math.isfinite(v) for v in levels):
            raise ValueError("constellation levels must be finite")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("constellation levels must be strictly increasing")
        object.__setattr__(self, "levels", levels)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def qam_size(self) -> int:
        return len(self.levels) ** 2

    @property
    def average_power(self) -> float:
        """Average power of the implied square-QAM constellation."""
        return 2.0 * float(np.mean(np.square(self.levels)))

    @property
    def is_symmetric(self) -> bool:
        arr = np.asarray(self.levels)
        return bool(np.all(arr == -arr[::-1]))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.levels, dtype=float)

    def qam_symbols(self) -> np.ndarray:
        """All complex QAM symbols (in-phase major order)."""
        arr = self.as_array()
        return (arr[:, None] + 1j * arr[None, :]).ravel()

    @classmethod
    def square_qam(cls, order: int) -> "Constellation":
        """Classical square QAM with odd-integer levels, e.g. 16 -> {+-1, +-3}."""
        m = math.isqrt(order)
        if m * m != order or m < 2:
            raise ValueError("order must be the square of an integer >= 2")
        return cls(tuple(float(2 * k - m + 1) for k in range(m)))

    @classmethod
    def from_positive_levels(cls, positive) -> "Constellation":
        """Symmetric constellation {-a_m, ..., -a_1, a_1, ..., a_m}."""
        pos = sorted(float(v) for v in positive)
        if any(v <= 0 for v in pos):
            raise ValueError("positive levels must be > 0")
        return cls(tuple(-v for v in reversed(pos)) + tuple(pos))


@dataclass(frozen=True)
class QuantizerSpec:
    """Uniform midrise quantizer: ``bits`` of resolution, step size ``step``."""

    bits: int
    step: float

    def __post_init__(self):
        if int(self.bits) != self.bits or self.bits < 1:
            raise ValueError("bits must be a positive integer")
        object.__setattr__(self, "bits", int(self.bits))
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ValueError("step must be positive and finite")
        object.__setattr__(self, "step", float(self.step))

    @property
    def n_levels(self) -> int:
        """Number of output levels K = 2**bits."""
        return 1 << self.bits

    @property
    def saturation(self) -> float:
        """Magnitude of the outermost output level, (K - 1) * step / 2."""
        return (self.n_levels - 1) * self.step / 2.0


@dataclass(frozen=True)
class SystemConfig:
    """Receive-side configuration: branch count, SNR, per-component noise std.

    ``noise_std`` is the standard deviation of the additive Gaussian noise
    seen by one quadrature component of one branch after analog gain/phase
    compensation. ``from_snr`` derives it from the SNR definition
    ``snr = average_power / complex_noise_variance``.
    """

    oversampling: int
    snr_db: float
    noise_std: float

    def __post_init__(self):
        if int(self.oversampling) != self.oversampling or self.oversampling < 1:
            raise ValueError("oversampling must be a positive integer")
        object.__setattr__(self, "oversampling", int(self.oversampling))
        if not (self.noise_std > 0 and math.isfinite(self.noise_std)):
            raise ValueError("noise_std must be positive and finite")

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    @classmethod
    def from_snr(cls, oversampling: int, snr_db: float,
                 constellation: Constellation) -> "SystemConfig":
        s = component_noise_std(snr_db, constellation)
        return cls(oversampling, float(snr_db), s)


def component_noise_std(snr_db, constellation: Constellation):
    """Per-component noise std for a given SNR (dB) and constellation.

    The complex noise variance is ``average_power / snr_linear``; each
    quadrature component carries half of it.
    """
    snr_lin = 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)
    return np.sqrt(constellation.average_power / (2.0 * snr_lin))


@dataclass(frozen=True, eq=False)
class DetectionPmf:
    """Exact distribution of the averaged detection variable for one input.

    The support is the regular grid of ``N * (K - 1) + 1`` points from the
    lowest to the highest quantizer level, spaced ``step / N``. Grid points
    are indexed by the integer ``t`` in ``0 .. N*(K-1)`` with value
    ``(2 t - N (K - 1)) * step / (2 N)``, so membership tests are exact.
    """

    quantizer_step: float
    oversampling: int
    n_quantizer_levels: int
    log_probs: np.ndarray
    log_norm: float = 0.0

    def __post_init__(self):
        lp = np.asarray(self.log_probs, dtype=float)
        expected = self.oversampling * (self.n_quantizer_levels - 1) + 1
        if lp.shape != (expected,):
            raise ValueError(f"log_probs must have {expected} entries")
        lp = lp.copy()
        lp.flags.writeable = False
        object.__setattr__(self, "log_probs", lp)

    @property
    def n_points(self) -> int:
        return self.log_probs.size

    @property
    def grid(self) -> np.ndarray:
        """Detection-variable values carried by each grid point."""
        n = self.oversampling
        k = self.n_quantizer_levels
        t = np.arange(n * (k - 1) + 1)
        return (2 * t - n * (k - 1)) * (self.quantizer_step / (2.0 * n))

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    @property
    def mean(self) -> float:
        return float(np.sum(self.grid * self.probs))

    @property
    def variance(self) -> float:
        g = self.grid
        p = self.probs
        m = np.sum(g * p)
        return float(np.sum((g - m) ** 2 * p))


@dataclass(frozen=True, eq=False)
class DecisionRule:
    """Ordered thresholds partitioning the detection-variable axis.

    Regions are half-open on the right: a detection value equal to a
    threshold belongs to the upper region. Two thresholds may coincide, in
    which case the region between them is empty (the exact ML rule does
    produce empty inner regions at extreme SNR, where an amplitude is never
    the most likely explanation of any detection value). ``grid_indices``
    is set when the thresholds are grid points of the detection variable
    (ML rule).
    """

    thresholds: np.ndarray
    detector: str
    grid_indices: np.ndarray | None = None
    midpoint_fallback: np.ndarray | None = None

    def __post_init__(self):
        thr = np.atleast_1d(np.asarray(self.thresholds, dtype=float))
        if thr.size and np.any(np.diff(thr) < 0):
            raise ValueError("thresholds must be non-decreasing")
        thr.flags.writeable = False
        object.__setattr__(self, "thresholds", thr)

    @property
    def n_regions(self) -> int:
        return self.thresholds.size + 1
