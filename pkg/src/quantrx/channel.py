"""Line-of-sight channel coefficients, SNR bookkeeping, and ADC power.

The detection pipeline itself only consumes (SNR, branch count): with
co-located antennas the per-branch gains are essentially equal, so after
gain/phase compensation all branches reduce to identical AWGN channels.
The helpers here derive that SNR from a physical link budget and generate
ADC parametrizations with equal power consumption.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SPEED_OF_LIGHT",
    "LosChannelParams",
    "AdcPowerSpec",
    "los_coefficient",
    "snr_from_channel",
    "adc_power",
    "iso_power_configs",
]

SPEED_OF_LIGHT = 299_792_458.0  # m/s


@dataclass(frozen=True)
class LosChannelParams:
    """Free-space line-of-sight path: carrier, distance, molecular absorption.

    ``absorption`` is the frequency-dependent absorption coefficient in 1/m,
    supplied as a scalar (transmission windows are treated as flat).
    """

    frequency_hz: float
    distance_m: float
    absorption: float = 0.0

    def __post_init__(self):
        if not self.frequency_hz > 0:
            raise ValueError("frequency must be positive")
        if not self.distance_m > 0:
            raise ValueError("distance must be positive")
        if self.absorption < 0:
            raise ValueError("absorption must be non-negative")


def los_coefficient(params: LosChannelParams) -> complex:
    """Complex channel gain of one line-of-sight path.

    Magnitude combines spreading loss c / (4 pi f d) and molecular
    absorption exp(-absorption * d / 2); the phase is the propagation
    delay -2 pi f d / c.
    """
    spreading = SPEED_OF_LIGHT / (4.0 * math.pi * params.frequency_hz
                                  * params.distance_m)
    magnitude = spreading * math.exp(-0.5 * params.absorption * params.distance_m)
    phase = -2.0 * math.pi * params.frequency_hz * params.distance_m / SPEED_OF_LIGHT
    return magnitude * cmath.exp(1j * phase)


def snr_from_channel(gains, average_power: float, noise_power: float) -> float:
    """Linear SNR ||h||^2 * average_power / (N * noise_power).

    With equal gains this reduces to |h|^2 * average_power / noise_power.
    Invariant under a common phase rotation of the gains.
    """
    gains = np.atleast_1d(np.asarray(gains, dtype=complex))
    if gains.size == 0:
        raise ValueError("need at least one channel gain")
    if not noise_power > 0:
        raise ValueError("noise power must be positive")
    return float(np.sum(np.abs(gains) ** 2) * average_power
                 / (gains.size * noise_power))


@dataclass(frozen=True)
class AdcPowerSpec:
    """ADC power model P = gamma * N * 2**(zeta*q) * f_s**nu.

    gamma is a technology figure of merit; only power ratios matter for the
    comparisons in this package, so gamma defaults to 1.
    """

    bits: int
    branches: int
    sampling_hz: float = 1.0
    gamma: float = 1.0
    zeta: int = 1
    nu: int = 2

    def __post_init__(self):
        if self.bits < 1 or self.branches < 1:
            raise ValueError("bits and branches must be positive integers")
        if self.zeta not in (1, 2) or self.nu not in (1, 2):
            raise ValueError("zeta and nu must be 1 or 2")
        if not (self.sampling_hz > 0 and self.gamma > 0):
            raise ValueError("sampling frequency and gamma must be positive")


def adc_power(spec: AdcPowerSpec) -> float:
    """Total ADC power consumption in watts for the given parametrization."""
    return (spec.gamma * spec.branches * 2.0 ** (spec.zeta * spec.bits)
            * spec.sampling_hz ** spec.nu)


def iso_power_configs(base: AdcPowerSpec, bit_range) -> list:
    """All (bits, branches) pairs matching the base ADC power consumption.

    Requires zeta = 1, where adding one bit exactly offsets halving the
    branch count. Pairs that would need a fractional branch count are
    dropped with a warning. Sorted by bits.
    """
    if base.zeta != 1:
        raise ValueError("iso-power exchange of bits and branches needs zeta=1")
    out = []
    for bits in sorted(set(int(b) for b in bit_range)):
        if bits < 1:
            continue
        scale = 2.0 ** (base.bits - bits)
        branches = base.branches * scale
        if branches < 1 or branches != int(branches):
            warnings.warn(
                f"skipping bits={bits}: branch count {branches} is not a "
                "positive integer", stacklevel=2)
            continue
        out.append((bits, int(branches)))
    return out
