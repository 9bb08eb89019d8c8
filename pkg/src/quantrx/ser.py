"""Exact analytic symbol error rates.

Per-component error rates are out-of-region probability masses of the
detection-variable PMF (threshold detectors) or out-of-set multinomial
masses (unfiltered detector), averaged over equiprobable amplitudes. All
masses are accumulated in log space so per-symbol rates far below the
double-precision underflow limit of intermediate products stay exact.

``ser_sweep`` is the vectorized engine used by the CLI and the
constellation optimizer; the scalar functions mirror its conventions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import (
    Constellation,
    DecisionRule,
    QuantizerSpec,
    SystemConfig,
    component_noise_std,
    q_function,
)
from .detectors import (
    DETECTOR_CLT,
    DETECTOR_MINDIST,
    DETECTOR_ML,
    DETECTOR_NOFILT,
    _argmax_tie_upper,
    _clt_intersections,
    _nofilt_log_weights,
)
from .quantizer import cond_mean, cond_variance
from .stats import (
    DEFAULT_ENUMERATION_CAP,
    detection_grid,
    log_pmf_for_levels,
)

__all__ = [
    "SerPoint",
    "SweepResult",
    "MinSer",
    "DETECTOR_UNQUANTIZED",
    "ser_qam",
    "ser_ask",
    "ser_nofilt",
    "ser_unquantized",
    "ser_unquantized_component",
    "ser_sweep",
    "min_ser_over_snr",
]

DETECTOR_UNQUANTIZED = "unquantized"


@dataclass(frozen=True)
class SerPoint:
    """One point of a symbol-error-rate curve."""

    snr_db: float
    detector: str
    ser: float
    ser_component: float
    per_symbol: tuple | None = None


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Vectorized SER curve over an SNR grid for one detector."""

    snr_db: np.ndarray
    detector: str
    ser: np.ndarray
    ser_component: np.ndarray
    per_symbol: np.ndarray
    thresholds: np.ndarray | None
    valid: np.ndarray

    def points(self):
        for i in range(self.snr_db.size):
            yield SerPoint(
                snr_db=float(self.snr_db[i]),
                detector=self.detector,
                ser=float(self.ser[i]),
                ser_component=float(self.ser_component[i]),
                per_symbol=tuple(self.per_symbol[i]),
            )


@dataclass(frozen=True)
class MinSer:
    """Grid minimum of an analytic SER curve."""

    snr_db: float
    ser: float
    index: int


def ser_qam(ser_component) -> float:
    """QAM symbol error rate from one quadrature component's error rate.

    Both components err independently: ser = 1 - (1 - ser')**2.
    """
    c = np.asarray(ser_component, dtype=float)
    if np.any((c < 0) | (c > 1)):
        raise ValueError("component SER must lie in [0, 1]")
    out = c * (2.0 - c)
    return float(out) if np.ndim(ser_component) == 0 else out


def _per_symbol_log(log_pmf, region):
    """Out-of-region log-mass per amplitude.

    log_pmf: (..., M, L); region: (..., L) region index of each grid point.
    """
    m = log_pmf.shape[-2]
    out = np.empty(log_pmf.shape[:-1])
    for i in range(m):
        masked = np.where(region != i, log_pmf[..., i, :], -np.inf)
        with np.errstate(divide="ignore"):
            out[..., i] = logsumexp(masked, axis=-1)
    return out


def ser_ask(rule: DecisionRule, cfg: SystemConfig, spec: QuantizerSpec,
            constellation: Constellation, method: str = "auto"):
    """Per-component SER of a threshold detector, with per-symbol rates.

    Returns ``(ser_component, per_symbol)`` where ``per_symbol[i]`` is the
    probability that amplitude i leaves its decision region.
    """
    levels = constellation.as_array()
    if rule.n_regions != levels.size:
        raise ValueError("rule does not match constellation size")
    log_pmf = log_pmf_for_levels(levels, cfg.noise_std, spec,
                                 cfg.oversampling, method=method)
    grid = detection_grid(spec, cfg.oversampling)
    region = np.searchsorted(rule.thresholds, grid, side="right")
    per_log = _per_symbol_log(log_pmf, region)
    ser_c = float(np.exp(logsumexp(per_log) - math.log(levels.size)))
    return ser_c, np.exp(per_log)


def ser_nofilt(cfg: SystemConfig, spec: QuantizerSpec,
               constellation: Constellation,
               cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """Per-component SER of the unfiltered optimum detector.

    Sums the exact multinomial mass of every observation-count vector that
    falls outside its amplitude's decision set.
    """
    _, weights = _nofilt_log_weights(cfg, spec, constellation, cap)
    assign = _argmax_tie_upper(weights)
    m = weights.shape[1]
    per_log = np.empty(m)
    for i in range(m):
        masked = np.where(assign != i, weights[:, i], -np.inf)
        with np.errstate(divide="ignore"):
            per_log[i] = logsumexp(masked)
    return float(np.exp(logsumexp(per_log) - math.log(m)))


def _unquantized_per_symbol(levels, noise_std_eff):
    """Per-amplitude error of ML detection of an ASK alphabet in plain AWGN.

    Midpoint thresholds are optimal here because every amplitude sees the
    same noise variance.
    """
    levels = np.asarray(levels, dtype=float)
    s = np.asarray(noise_std_eff, dtype=float)[..., None]
    mid = 0.5 * (levels[:-1] + levels[1:])
    up = q_function((mid - levels[:-1]) / s)     # crossing the upper boundary
    down = q_function((levels[1:] - mid) / s)    # crossing the lower boundary
    per = np.zeros(s.shape[:-1] + (levels.size,))
    per[..., :-1] += up
    per[..., 1:] += down
    return per


def ser_unquantized_component(cfg: SystemConfig,
                              constellation: Constellation) -> float:
    """Per-component SER of the unquantized benchmark receiver.

    Averaging N unquantized branches is equivalent to one observation with
    the noise variance divided by N.
    """
    s_eff = cfg.noise_std / math.sqrt(cfg.oversampling)
    per = _unquantized_per_symbol(constellation.as_array(), s_eff)
    return float(per.mean())


def ser_unquantized(cfg: SystemConfig, constellation: Constellation) -> float:
    """QAM SER of the unquantized benchmark receiver."""
    return ser_qam(ser_unquantized_component(cfg, constellation))


# ---------------------------------------------------------------------------
# vectorized sweep engine
# ---------------------------------------------------------------------------

def _batched_thresholds(detector, log_pmf, levels, noise_std, spec,
                        oversampling, grid):
    """(n, M-1) thresholds and validity flags for a threshold detector."""
    if detector == DETECTOR_ML:
        ge = log_pmf[:, 1:, :] >= log_pmf[:, :-1, :]
        found = ge.any(axis=-1)
        idx = ge.argmax(axis=-1)
        thr = grid[idx]
        valid = found.all(axis=-1)
        if thr.shape[1] > 1:
            valid &= (np.diff(idx, axis=-1) >= 0).all(axis=-1)
        return thr, valid
    mu = np.asarray(cond_mean(levels[None, :], noise_std[:, None], spec))
    if detector == DETECTOR_MINDIST:
        thr = 0.5 * (mu[:, :-1] + mu[:, 1:])
        valid = _non_decreasing(thr)
        return thr, valid
    if detector == DETECTOR_CLT:
        var = np.asarray(cond_variance(levels[None, :], noise_std[:, None],
                                       spec)) / oversampling
        valid = (var > 0).all(axis=-1)
        var = np.where(var > 0, var, 1.0)  # placeholder on invalid rows
        thr, _ = _clt_intersections(mu[:, :-1], var[:, :-1],
                                    mu[:, 1:], var[:, 1:])
        valid &= _non_decreasing(thr)
        return thr, valid
    raise ValueError(f"unknown threshold detector {detector!r}")


def _non_decreasing(thr):
    if thr.shape[-1] <= 1:
        return np.ones(thr.shape[:-1], dtype=bool)
    return (np.diff(thr, axis=-1) >= 0).all(axis=-1)


def ser_sweep(detector: str, snr_db, oversampling: int, spec: QuantizerSpec,
              constellation: Constellation, method: str = "auto",
              cap: int = DEFAULT_ENUMERATION_CAP) -> SweepResult:
    """Analytic SER curve over an SNR grid, vectorized over the grid.

    ``detector`` is one of ``ml``, ``clt``, ``mindist``, ``nofilt``,
    ``unquantized``. Grid points where a rule cannot be constructed (for
    example non-monotone likelihood crossings or vanishing CLT variance at
    extreme SNR) are reported as NaN with ``valid`` cleared.

    With ``method="auto"`` the PMF kernel is chosen by problem size; all
    kernels agree to well below 1e-12.
    """
    snr_db = np.atleast_1d(np.asarray(snr_db, dtype=float))
    if snr_db.size == 0:
        raise ValueError("snr_db grid must be non-empty")
    levels = constellation.as_array()
    m = levels.size
    s = np.asarray(component_noise_std(snr_db, constellation))
    if detector == DETECTOR_UNQUANTIZED:
        per = _unquantized_per_symbol(levels, s / math.sqrt(oversampling))
        ser_c = per.mean(axis=-1)
        mid = 0.5 * (levels[:-1] + levels[1:])
        thr = np.broadcast_to(mid, (snr_db.size, m - 1)).copy()
        return SweepResult(snr_db, detector, ser_qam(ser_c), ser_c, per, thr,
                           np.ones(snr_db.size, dtype=bool))
    if detector == DETECTOR_NOFILT:
        ser_c = np.empty(snr_db.size)
        for i, (snr, si) in enumerate(zip(snr_db, s)):
            cfg = SystemConfig(oversampling, float(snr), float(si))
            ser_c[i] = ser_nofilt(cfg, spec, constellation, cap=cap)
        per = np.full((snr_db.size, m), np.nan)
        return SweepResult(snr_db, detector, ser_qam(ser_c), ser_c, per, None,
                           np.ones(snr_db.size, dtype=bool))

    log_pmf = log_pmf_for_levels(levels, s, spec, oversampling,
                                 method=method, cap=cap)
    grid = detection_grid(spec, oversampling)
    thr, valid = _batched_thresholds(detector, log_pmf, levels, s, spec,
                                     oversampling, grid)
    region = (grid[None, None, :] >= thr[:, :, None]).sum(axis=1)
    per_log = _per_symbol_log(log_pmf, region)
    with np.errstate(invalid="ignore"):
        log_ser_c = logsumexp(per_log, axis=-1) - math.log(m)
    ser_c = np.exp(log_ser_c)
    ser_c[~valid] = np.nan
    per = np.exp(per_log)
    per[~valid] = np.nan
    thr = thr.astype(float)
    thr[~valid] = np.nan
    with np.errstate(invalid="ignore"):
        ser = np.where(np.isnan(ser_c), np.nan, ser_c * (2.0 - ser_c))
    return SweepResult(snr_db, detector, ser, ser_c, per, thr, valid)


def min_ser_over_snr(detector: str, oversampling: int, spec: QuantizerSpec,
                     constellation: Constellation, snr_db_grid,
                     method: str = "auto",
                     cap: int = DEFAULT_ENUMERATION_CAP) -> MinSer:
    """Grid minimum of the analytic QAM SER curve; ties take the lowest SNR."""
    sweep = ser_sweep(detector, snr_db_grid, oversampling, spec, constellation,
                      method=method, cap=cap)
    if not np.isfinite(sweep.ser).any():
        raise ValueError("SER curve is undefined on the whole grid")
    idx = int(np.nanargmin(sweep.ser))
    return MinSer(snr_db=float(sweep.snr_db[idx]), ser=float(sweep.ser[idx]),
                  index=idx)
