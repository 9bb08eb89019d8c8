"""Construction and application of the symbol decision rules.

Four detectors are supported:

* ``ml`` - exact maximum likelihood on the averaged detection variable;
  thresholds are found on the detection grid as the smallest grid value
  where the likelihood of the larger of two adjacent amplitudes is >= that
  of the smaller one.
* ``clt`` - Gaussian approximation with per-symbol variance; thresholds are
  the interior intersection points of the two scaled Gaussian densities.
* ``mindist`` - minimum distance to the conditional means; thresholds are
  midpoints of adjacent conditional means.
* ``nofilt`` - the unfiltered optimum detector operating on the per-level
  observation counts directly (no threshold representation exists).

All decision regions are half-open on the right: a detection value equal
to a threshold decides for the upper amplitude. Ties in the unfiltered
argmax resolve the same way (toward the larger amplitude), which realizes
the exact equivalence with the threshold ML detector for 1-bit
quantization, count for count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Constellation, DecisionRule, QuantizerSpec, SystemConfig
from .quantizer import cond_mean, cond_variance, log_level_probs
from .stats import (
    DEFAULT_ENUMERATION_CAP,
    _check_cap,
    _multinomial_log_weights,
    _sorted_composition_data,
    detection_grid,
    log_pmf_for_levels,
)

__all__ = [
    "ThresholdCrossingError",
    "DETECTOR_ML",
    "DETECTOR_CLT",
    "DETECTOR_MINDIST",
    "DETECTOR_NOFILT",
    "NoFiltDecisionSets",
    "ml_thresholds",
    "clt_thresholds",
    "mindist_thresholds",
    "build_rule",
    "detect",
    "nofilt_detect",
    "nofilt_decision_sets",
]

DETECTOR_ML = "ml"
DETECTOR_CLT = "clt"
DETECTOR_MINDIST = "mindist"
DETECTOR_NOFILT = "nofilt"

# relative variance difference below which the CLT intersection degenerates
# to the midpoint of the means
_EQUAL_VARIANCE_RTOL = 1e-12


class ThresholdCrossingError(ValueError):
    """Raised when likelihood crossings do not produce ordered thresholds."""


def ml_thresholds(cfg: SystemConfig, spec: QuantizerSpec,
                  constellation: Constellation,
                  method: str = "auto") -> DecisionRule:
    """Exact ML thresholds on the detection grid.

    For each adjacent amplitude pair the threshold is the smallest grid
    value where the conditional PMF of the larger amplitude is >= that of
    the smaller one. Coincident thresholds (empty decision regions) are
    legitimate at extreme SNR; a decreasing crossing sequence raises
    ``ThresholdCrossingError``.
    """
    log_pmf = log_pmf_for_levels(constellation.as_array(), cfg.noise_std,
                                 spec, cfg.oversampling, method=method)
    grid = detection_grid(spec, cfg.oversampling)
    indices = _ml_crossing_indices(log_pmf)
    if indices is None or np.any(np.diff(indices) < 0):
        raise ThresholdCrossingError("non-monotone likelihood crossing")
    return DecisionRule(thresholds=grid[indices], detector=DETECTOR_ML,
                        grid_indices=indices)


def _ml_crossing_indices(log_pmf):
    """First grid index per adjacent pair where the upper PMF >= the lower."""
    ge = log_pmf[1:] >= log_pmf[:-1]
    if not ge.any(axis=-1).all():
        return None
    return ge.argmax(axis=-1)


def clt_thresholds(cfg: SystemConfig, spec: QuantizerSpec,
                   constellation: Constellation) -> DecisionRule:
    """Thresholds at the intersections of the per-symbol Gaussian densities.

    The intersection of two scaled Gaussians solves a quadratic in the
    detection variable (in log-density form); the root inside the interval
    between the two means is taken. Equal-variance pairs degenerate to the
    midpoint; if no root lies between the means the midpoint is used and
    the pair is flagged in ``midpoint_fallback``.
    """
    levels = constellation.as_array()
    mu = np.asarray(cond_mean(levels, cfg.noise_std, spec), dtype=float)
    var = np.asarray(cond_variance(levels, cfg.noise_std, spec), dtype=float)
    var = var / cfg.oversampling
    if np.any(var <= 0):
        raise ValueError("CLT thresholds require positive detection variance")
    thr, fallback = _clt_intersections(mu[:-1], var[:-1], mu[1:], var[1:])
    if np.any(np.diff(thr) < 0):
        raise ThresholdCrossingError("non-monotone likelihood crossing")
    return DecisionRule(thresholds=thr, detector=DETECTOR_CLT,
                        midpoint_fallback=fallback)


def _clt_intersections(mu_lo, var_lo, mu_hi, var_hi):
    """Interior intersection of N(mu_lo, var_lo) and N(mu_hi, var_hi) pairs."""
    mu_lo, var_lo, mu_hi, var_hi = np.broadcast_arrays(mu_lo, var_lo, mu_hi, var_hi)
    mid = 0.5 * (mu_lo + mu_hi)
    thr = mid.copy()
    fallback = np.zeros(mid.shape, dtype=bool)
    degenerate = np.abs(var_lo - var_hi) <= _EQUAL_VARIANCE_RTOL * np.maximum(var_lo, var_hi)
    solve = ~degenerate
    if np.any(solve):
        a = 0.5 / var_hi[solve] - 0.5 / var_lo[solve]
        b = mu_lo[solve] / var_lo[solve] - mu_hi[solve] / var_hi[solve]
        c = (0.5 * mu_hi[solve] ** 2 / var_hi[solve]
             - 0.5 * mu_lo[solve] ** 2 / var_lo[solve]
             + 0.5 * np.log(var_hi[solve] / var_lo[solve]))
        disc = b ** 2 - 4.0 * a * c
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        r1 = (-b - sq) / (2.0 * a)
        r2 = (-b + sq) / (2.0 * a)
        lo, hi = mu_lo[solve], mu_hi[solve]
        in1 = ok & (r1 >= lo) & (r1 <= hi)
        in2 = ok & (r2 >= lo) & (r2 <= hi)
        root = np.where(in1, r1, np.where(in2, r2, 0.5 * (lo + hi)))
        thr[solve] = root
        fb = np.zeros(root.shape, dtype=bool)
        fb[~(in1 | in2)] = True
        fallback[solve] = fb
    return thr, fallback


def mindist_thresholds(cfg: SystemConfig, spec: QuantizerSpec,
                       constellation: Constellation) -> DecisionRule:
    """Thresholds at the midpoints of adjacent conditional means."""
    mu = np.asarray(cond_mean(constellation.as_array(), cfg.noise_std, spec),
                    dtype=float)
    thr = 0.5 * (mu[:-1] + mu[1:])
    if np.any(np.diff(thr) < 0):
        raise ThresholdCrossingError("non-monotone likelihood crossing")
    return DecisionRule(thresholds=thr, detector=DETECTOR_MINDIST)


_RULE_BUILDERS = {
    DETECTOR_ML: ml_thresholds,
    DETECTOR_CLT: clt_thresholds,
    DETECTOR_MINDIST: mindist_thresholds,
}


def build_rule(detector: str, cfg: SystemConfig, spec: QuantizerSpec,
               constellation: Constellation) -> DecisionRule:
    """Construct the decision rule for one of the threshold detectors."""
    try:
        builder = _RULE_BUILDERS[detector]
    except KeyError:
        raise ValueError(f"unknown threshold detector {detector!r}") from None
    return builder(cfg, spec, constellation)


def detect(d, rule: DecisionRule, constellation: Constellation | None = None):
    """0-based constellation index decided for detection value(s) ``d``.

    A value equal to a threshold decides for the upper region; values
    outside the detection range simply fall into the closest outer region.
    """
    if constellation is not None and rule.n_regions != constellation.n_levels:
        raise ValueError("rule does not match constellation size")
    idx = np.searchsorted(rule.thresholds, np.asarray(d, dtype=float),
                          side="right")
    return idx if np.ndim(d) else int(idx)


@dataclass(frozen=True, eq=False)
class NoFiltDecisionSets:
    """Partition of all observation-count vectors among the amplitudes.

    ``compositions`` lists every count vector (grouped by detection value);
    ``assignment[i]`` is the 0-based constellation index owning row i. Each
    vector belongs to exactly one set.
    """

    compositions: np.ndarray
    assignment: np.ndarray

    def as_dict(self) -> dict:
        return {tuple(int(c) for c in row): int(a)
                for row, a in zip(self.compositions, self.assignment)}


def _nofilt_log_weights(cfg, spec, constellation, cap):
    _check_cap(cfg.oversampling, spec.n_levels, cap)
    counts, log_coeffs, _, _ = _sorted_composition_data(cfg.oversampling,
                                                        spec.n_levels)
    logp = log_level_probs(constellation.as_array(), cfg.noise_std, spec)
    return counts, _multinomial_log_weights(counts, log_coeffs, logp)


def _argmax_tie_upper(weights):
    """Row-wise argmax over columns; ties go to the larger column index."""
    m = weights.shape[1]
    return m - 1 - np.argmax(weights[:, ::-1], axis=1)


def nofilt_decision_sets(cfg: SystemConfig, spec: QuantizerSpec,
                         constellation: Constellation,
                         cap: int = DEFAULT_ENUMERATION_CAP) -> NoFiltDecisionSets:
    """Assign every observation-count vector to its most likely amplitude."""
    counts, weights = _nofilt_log_weights(cfg, spec, constellation, cap)
    return NoFiltDecisionSets(
        compositions=counts.astype(np.int64),
        assignment=_argmax_tie_upper(weights),
    )


def nofilt_detect(counts, cfg: SystemConfig, spec: QuantizerSpec,
                  constellation: Constellation) -> int:
    """Unfiltered optimum decision for one observation-count vector.

    Maximizes ``sum_k counts_k * ln P_k(x)`` over the constellation;
    a tie decides for the larger amplitude (see module docstring).
    """
    counts = np.asarray(counts)
    if counts.shape != (spec.n_levels,):
        raise ValueError(f"counts must have length {spec.n_levels}")
    if np.any(counts < 0) or counts.sum() != cfg.oversampling:
        raise ValueError("counts must be non-negative and sum to the branch count")
    logp = log_level_probs(constellation.as_array(), cfg.noise_std, spec)
    # the multinomial coefficient is common to all hypotheses; keeping it
    # makes these scores directly comparable to detection-variable PMF values
    coeff = float(math.lgamma(cfg.oversampling + 1)
                  - sum(math.lgamma(int(c) + 1) for c in counts))
    scores = coeff + logp @ counts.astype(float)
    return int(_argmax_tie_upper(scores[None, :])[0])
