"""Exact statistics of the averaged detection variable.

One transmitted amplitude is observed through N branches, each quantized to
one of K levels; the detection variable is the arithmetic mean of the N
quantized values. Its support is the integer grid t = 0 .. N*(K-1) with
value (2t - N(K-1)) * step / (2N), and its exact PMF is a multinomial
mixture over the compositions of N into K parts.

Three evaluation routes are provided (all in log space):

* ``convolution`` - N successive convolutions of the K-point level
  distribution; scales to any K and is the default for K > 2.
* ``enumeration`` - explicit sum over all C(N+K-1, K-1) compositions,
  binned by grid index; kept as an independent oracle.
* For K = 2 the composition-to-grid map is a bijection, so the enumeration
  route is a closed single-term form and is the default; this keeps the
  detection-variable PMF bit-identical to the per-composition masses used
  by the unfiltered detector.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import (
    DetectionPmf,
    QuantizerSpec,
    SystemConfig,
    log_multinomial_coeff_rows,
)
from .quantizer import cond_mean, cond_variance, log_level_probs

__all__ = [
    "EnumerationLimitError",
    "CltDensity",
    "DEFAULT_ENUMERATION_CAP",
    "composition_count",
    "enumerate_compositions",
    "composition_matrix",
    "detection_value",
    "detection_grid",
    "pmf_of_d",
    "d_moments",
    "clt_pdf",
    "log_detection_pmf",
    "log_pmf_for_levels",
]

DEFAULT_ENUMERATION_CAP = 10 ** 8


class EnumerationLimitError(ValueError):
    """Raised when a composition enumeration would exceed the configured cap."""


def composition_count(n: int, k: int) -> int:
    """Number of compositions of n into k non-negative parts."""
    return math.comb(n + k - 1, k - 1)


def _check_cap(n, k, cap):
    count = composition_count(n, k)
    if count > cap:
        raise EnumerationLimitError(
            f"enumeration too large: {count} compositions for "
            f"N={n}, K={k} exceed cap {cap}"
        )
    return count


def enumerate_compositions(n: int, k: int, cap: int = DEFAULT_ENUMERATION_CAP):
    """Yield every k-tuple of non-negative integers summing to n.

    Colexicographic order: the last coordinate varies slowest. Raises
    ``EnumerationLimitError`` up front if the count exceeds ``cap``.
    """
    if n < 1 or k < 2:
        raise ValueError("need n >= 1 and k >= 2")
    _check_cap(n, k, cap)
    yield from _compositions_colex(n, k)


def _compositions_colex(n, k):
    if k == 1:
        yield (n,)
        return
    for last in range(n + 1):
        for head in _compositions_colex(n - last, k - 1):
            yield head + (last,)


@functools.lru_cache(maxsize=8)
def _composition_matrix_cached(n: int, k: int) -> np.ndarray:
    mat = np.array(list(_compositions_colex(n, k)), dtype=np.int64)
    mat.flags.writeable = False
    return mat


def composition_matrix(n: int, k: int, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """All compositions as a read-only (count, k) array in colex order."""
    if n < 1 or k < 2:
        raise ValueError("need n >= 1 and k >= 2")
    _check_cap(n, k, cap)
    return _composition_matrix_cached(n, k)


@functools.lru_cache(maxsize=8)
def _sorted_composition_data(n: int, k: int):
    """Compositions sorted by grid index, with segment bounds for binning.

    Returns (counts_float, log_coeffs, grid_index, segment_starts); rows
    within one segment share the same grid index t = sum_k counts * (k-1).
    """
    mat = _composition_matrix_cached(n, k)
    t = mat @ np.arange(k)
    order = np.argsort(t, kind="stable")
    mat = mat[order]
    t = t[order]
    log_coeffs = log_multinomial_coeff_rows(mat)
    n_points = n * (k - 1) + 1
    starts = np.searchsorted(t, np.arange(n_points))
    mat_float = mat.astype(float)
    for arr in (mat_float, t, log_coeffs, starts):
        arr.flags.writeable = False
    return mat_float, log_coeffs, t, starts


def detection_value(counts, spec: QuantizerSpec, oversampling: int) -> float:
    """Averaged detection variable produced by per-level observation counts.

    Exact: the value is an integer multiple of step / (2 * oversampling).
    """
    counts = np.asarray(counts)
    if counts.shape != (spec.n_levels,):
        raise ValueError(f"counts must have length {spec.n_levels}")
    if np.any(counts < 0) or counts.sum() != oversampling:
        raise ValueError("counts must be non-negative and sum to the branch count")
    t = int(counts @ np.arange(spec.n_levels))
    n, k = oversampling, spec.n_levels
    return (2 * t - n * (k - 1)) * spec.step / (2.0 * n)


def detection_grid(spec: QuantizerSpec, oversampling: int) -> np.ndarray:
    """All N*(K-1)+1 possible detection-variable values, ascending."""
    n, k = oversampling, spec.n_levels
    t = np.arange(n * (k - 1) + 1)
    return (2 * t - n * (k - 1)) * (spec.step / (2.0 * n))


# ---------------------------------------------------------------------------
# log-space PMF kernels
# ---------------------------------------------------------------------------

def _multinomial_log_weights(counts_float, log_coeffs, log_probs_matrix):
    """Joint log-mass of every composition under every input hypothesis.

    counts_float: (n_comp, K); log_probs_matrix: (M, K). Returns
    (n_comp, M). Shared by the detection-variable PMF (binned by grid
    index) and the unfiltered detector (consumed per composition), so the
    two agree bit-for-bit where the binning is a bijection.

    The two-level case uses explicit elementwise arithmetic rather than a
    matrix product: the commutativity of the one addition makes the
    weights of mirrored inputs bit-identical, which downstream turns the
    symmetric likelihood ties into exact ties.
    """
    if counts_float.shape[1] == 2:
        w = (counts_float[:, :1] * log_probs_matrix[None, :, 0]
             + counts_float[:, 1:] * log_probs_matrix[None, :, 1])
        return log_coeffs[:, None] + w
    return log_coeffs[:, None] + counts_float @ log_probs_matrix.T


def _segment_logsumexp(values, starts, lengths):
    """logsumexp over contiguous row segments of a (rows, cols) array."""
    mx = np.maximum.reduceat(values, starts, axis=0)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    shifted = np.exp(values - np.repeat(safe, lengths, axis=0))
    sums = np.add.reduceat(shifted, starts, axis=0)
    with np.errstate(divide="ignore"):
        return np.log(sums) + safe


def _log_pmf_enumeration(log_probs, n, cap=DEFAULT_ENUMERATION_CAP):
    """Exact PMF by summing the multinomial mixture composition by composition.

    ``log_probs``: (..., K) level log-probabilities; returns (..., L).
    """
    log_probs = np.asarray(log_probs, dtype=float)
    k = log_probs.shape[-1]
    _check_cap(n, k, cap)
    counts, log_coeffs, t, starts = _sorted_composition_data(n, k)
    batch_shape = log_probs.shape[:-1]
    flat = log_probs.reshape(-1, k)
    n_points = n * (k - 1) + 1
    out = np.empty((flat.shape[0], n_points))
    lengths = np.diff(np.append(starts, counts.shape[0]))
    # chunk the batch so the (n_comp, chunk) weight matrix stays small
    chunk = max(1, int(4_000_000 // max(counts.shape[0], 1)))
    for i in range(0, flat.shape[0], chunk):
        w = _multinomial_log_weights(counts, log_coeffs, flat[i:i + chunk])
        if counts.shape[0] == n_points:      # bijection: binning is identity
            out[i:i + chunk] = w.T
        else:
            out[i:i + chunk] = _segment_logsumexp(w, starts, lengths).T
    return out.reshape(batch_shape + (n_points,))


def _log_pmf_convolution(log_probs, n):
    """Exact PMF by N successive log-space convolutions of the level PMF."""
    log_probs = np.asarray(log_probs, dtype=float)
    k = log_probs.shape[-1]
    batch_shape = log_probs.shape[:-1]
    cur = np.zeros(batch_shape + (1,))
    for _ in range(n):
        length = cur.shape[-1]
        nxt = np.full(batch_shape + (length + k - 1,), -np.inf)
        for j in range(k):
            seg = nxt[..., j:j + length]
            np.logaddexp(seg, cur + log_probs[..., j:j + 1], out=seg)
        cur = nxt
    return cur


def log_detection_pmf(log_probs, oversampling: int, method: str = "auto",
                      cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """Log-PMF of the averaged detection variable over its grid.

    ``log_probs`` holds the K level log-probabilities on the last axis;
    leading axes are batch dimensions. ``method`` is one of ``auto``,
    ``convolution``, ``enumeration``.
    """
    log_probs = np.asarray(log_probs, dtype=float)
    k = log_probs.shape[-1]
    if method == "auto":
        method = "enumeration" if k == 2 else "convolution"
    if method == "enumeration":
        return _log_pmf_enumeration(log_probs, oversampling, cap)
    if method == "convolution":
        return _log_pmf_convolution(log_probs, oversampling)
    raise ValueError(f"unknown PMF method {method!r}")


# composition count below which the enumeration kernel (one matrix product
# per evaluation) beats repeated log-space convolutions
_ENUMERATION_FAST_LIMIT = 200_000


def _fast_method(spec, oversampling, method):
    if method != "auto":
        return method
    if spec.n_levels == 2:
        return "enumeration"
    if composition_count(oversampling, spec.n_levels) <= _ENUMERATION_FAST_LIMIT:
        return "enumeration"
    return "convolution"


def log_pmf_for_levels(levels, noise_std, spec: QuantizerSpec,
                       oversampling: int, method: str = "auto",
                       cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """Detection log-PMF for every amplitude of a level set.

    ``levels`` is the (M,) amplitude vector; ``noise_std`` is a scalar or a
    (n,) array, giving a result of shape (M, L) or (n, M, L). A symmetric
    level set is evaluated on its positive half and mirrored, so the
    symmetry of the conditional PMFs is exact to the last bit (symmetric
    likelihood ties then resolve consistently everywhere). ``auto`` picks
    the faster exact kernel for the problem size.
    """
    levels = np.asarray(levels, dtype=float)
    noise = np.asarray(noise_std, dtype=float)
    scalar_noise = noise.ndim == 0
    noise = np.atleast_1d(noise)
    m = levels.size
    method = _fast_method(spec, oversampling, method)
    symmetric = m % 2 == 0 and bool(np.all(levels == -levels[::-1]))
    if symmetric:
        pos = levels[m // 2:]
        lp = log_level_probs(pos[None, :], noise[:, None], spec)
        half = log_detection_pmf(lp, oversampling, method=method, cap=cap)
        out = np.empty(half.shape[:1] + (m,) + half.shape[2:])
        out[:, m // 2:, :] = half
        out[:, :m // 2, :] = half[:, ::-1, ::-1]
    else:
        lp = log_level_probs(levels[None, :], noise[:, None], spec)
        out = log_detection_pmf(lp, oversampling, method=method, cap=cap)
    return out[0] if scalar_noise else out


def pmf_of_d(x: float, cfg: SystemConfig, spec: QuantizerSpec,
             method: str = "auto",
             cap: int = DEFAULT_ENUMERATION_CAP) -> DetectionPmf:
    """Exact conditional PMF of the detection variable given input amplitude x.

    The returned distribution is normalized; ``log_norm`` records the raw
    log-mass that was removed (it is zero to within accumulated rounding).
    """
    logp = log_level_probs(float(x), cfg.noise_std, spec)
    raw = log_detection_pmf(logp, cfg.oversampling, method=method, cap=cap)
    total = float(special.logsumexp(raw))
    return DetectionPmf(
        quantizer_step=spec.step,
        oversampling=cfg.oversampling,
        n_quantizer_levels=spec.n_levels,
        log_probs=raw - total,
        log_norm=total,
    )


@dataclass(frozen=True)
class CltDensity:
    """Gaussian approximation of the detection variable for one input."""

    mean: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def d_moments(x: float, cfg: SystemConfig, spec: QuantizerSpec) -> CltDensity:
    """Exact mean and variance of the detection variable given input x.

    The mean equals the single-observation conditional mean; averaging N
    branches divides the variance by N.
    """
    mu = float(cond_mean(float(x), cfg.noise_std, spec))
    var = float(cond_variance(float(x), cfg.noise_std, spec)) / cfg.oversampling
    return CltDensity(mean=mu, variance=var)


def clt_pdf(d, density: CltDensity):
    """Gaussian density matching the detection variable's first two moments.

    Scaled by step / N it approximates the exact PMF for large N.
    """
    if not density.variance > 0:
        raise ValueError("CLT density requires positive variance")
    d = np.asarray(d, dtype=float)
    return np.exp(-((d - density.mean) ** 2) / (2.0 * density.variance)) / (
        math.sqrt(2.0 * math.pi) * density.std
    )
