"""Trial-based verification of the analytic error rates.

The simulator drives the equivalent per-component chain: draw a QAM
symbol, add per-branch complex Gaussian noise (optionally artificial
dithering noise and a multiplicative channel-estimation error), quantize
each branch, average, and decide both quadrature components.

Reproducibility: trials are processed in fixed-size blocks of
``_BLOCK_SIZE``; block j uses an independent counter-based Philox stream
keyed by (seed, j). Error counts are integer-summed over blocks, so the
result depends only on (seed, trials, configuration), never on how many
workers processed the blocks.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import Constellation, QuantizerSpec, SystemConfig
from .detectors import (
    DETECTOR_ML,
    DETECTOR_NOFILT,
    _argmax_tie_upper,
    build_rule,
)
from .quantizer import log_level_probs, quantize_index
from .ser import DETECTOR_UNQUANTIZED, MinSer, min_ser_over_snr

__all__ = ["McConfig", "McResult", "DitherPlan", "simulate_ser", "optimum_dither"]

_BLOCK_SIZE = 1 << 15
_KEY_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo run settings.

    ``artificial_noise_var`` and ``channel_error_var`` are variances of
    complex quantities: the dithering noise added in front of the
    quantizers (same normalization as the channel noise variance) and the
    channel-estimation error relative to the unit equivalent gain.
    ``channel_error_block`` is the number of consecutive symbols sharing
    one error realization.
    """

    trials: int
    seed: int = 0
    artificial_noise_var: float = 0.0
    channel_error_var: float = 0.0
    channel_error_block: int = 1
    detector: str = DETECTOR_ML

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.artificial_noise_var < 0 or self.channel_error_var < 0:
            raise ValueError("noise variances must be non-negative")
        if self.channel_error_block < 1:
            raise ValueError("channel_error_block must be >= 1")


@dataclass(frozen=True)
class McResult:
    """Estimated QAM SER with its binomial standard error."""

    ser: float
    stderr: float
    errors: int
    trials: int
    effective_snr_db: float
    detector: str


@dataclass(frozen=True)
class DitherPlan:
    """Artificial-noise budget that moves the SNR to the analytic optimum."""

    variance: float
    effective_snr_db: float
    applied: bool
    analytic_min: MinSer


@dataclass(frozen=True)
class _BlockTask:
    oversampling: int
    noise_std: float
    spec: QuantizerSpec
    levels: tuple
    thresholds: tuple | None
    nofilt_log_probs: tuple | None
    quantized: bool
    artificial_std: float
    channel_error_var: float
    channel_error_block: int
    seed: int
    n_symbol_levels: int


def _block_rng(seed: int, block_index: int) -> np.random.Generator:
    key = np.array([seed & _KEY_MASK, block_index & _KEY_MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _simulate_block(task: _BlockTask, block_index: int, size: int) -> int:
    rng = _block_rng(task.seed, block_index)
    m = task.n_symbol_levels
    levels = np.asarray(task.levels)
    sym = rng.integers(0, m, size=(size, 2))
    tx = levels[sym[:, 0]] + 1j * levels[sym[:, 1]]
    noise = rng.standard_normal((size, 2, task.oversampling))
    n = task.oversampling
    rx = tx[:, None] + task.noise_std * (noise[:, 0] + 1j * noise[:, 1])
    if task.channel_error_var > 0:
        n_real = math.ceil(size / task.channel_error_block)
        err = rng.standard_normal((n_real, 2, n))
        gain = 1.0 + math.sqrt(task.channel_error_var / 2.0) * (
            err[:, 0] + 1j * err[:, 1])
        gain = np.repeat(gain, task.channel_error_block, axis=0)[:size]
        rx = rx / gain
    if task.artificial_std > 0:
        art = rng.standard_normal((size, 2, n))
        rx = rx + task.artificial_std * (art[:, 0] + 1j * art[:, 1])

    if task.quantized:
        spec = task.spec
        k = spec.n_levels
        scale = spec.step / (2.0 * n)
        decisions = []
        for comp in (rx.real, rx.imag):
            idx = quantize_index(comp, spec)
            if task.thresholds is not None:
                t = (idx - 1).sum(axis=1)
                d = (2 * t - n * (k - 1)) * scale
                decisions.append(np.searchsorted(
                    np.asarray(task.thresholds), d, side="right"))
            else:
                counts = (idx[:, :, None]
                          == np.arange(1, k + 1)[None, None, :]).sum(axis=1)
                logp = np.asarray(task.nofilt_log_probs)      # (m, k)
                scores = counts @ logp.T
                decisions.append(_argmax_tie_upper(scores))
    else:
        thr = np.asarray(task.thresholds)
        decisions = [
            np.searchsorted(thr, rx.real.mean(axis=1), side="right"),
            np.searchsorted(thr, rx.imag.mean(axis=1), side="right"),
        ]
    wrong = (decisions[0] != sym[:, 0]) | (decisions[1] != sym[:, 1])
    return int(np.count_nonzero(wrong))


def simulate_ser(cfg: SystemConfig, spec: QuantizerSpec,
                 constellation: Constellation, mc: McConfig,
                 workers: int = 1) -> McResult:
    """Estimate the QAM SER of the configured receiver by simulation.

    The decision rule is built for the effective SNR including any
    artificial dithering noise (the receiver knows what it adds); the
    channel-estimation error is not known to the receiver and perturbs the
    compensated branches multiplicatively. Identical (seed, trials,
    configuration) give identical error counts for any worker count.
    """
    power = constellation.average_power
    channel_var = power / cfg.snr_linear
    total_var = channel_var + mc.artificial_noise_var
    effective_snr_db = 10.0 * math.log10(power / total_var)
    eff_cfg = SystemConfig(cfg.oversampling, effective_snr_db,
                           math.sqrt(total_var / 2.0))

    thresholds = None
    nofilt_logp = None
    quantized = True
    if mc.detector == DETECTOR_NOFILT:
        nofilt_logp = tuple(map(tuple, log_level_probs(
            constellation.as_array(), eff_cfg.noise_std, spec)))
    elif mc.detector == DETECTOR_UNQUANTIZED:
        lv = constellation.as_array()
        thresholds = tuple(0.5 * (lv[:-1] + lv[1:]))
        quantized = False
    else:
        rule = build_rule(mc.detector, eff_cfg, spec, constellation)
        thresholds = tuple(rule.thresholds)

    task = _BlockTask(
        oversampling=cfg.oversampling,
        noise_std=math.sqrt(channel_var / 2.0),
        spec=spec,
        levels=constellation.levels,
        thresholds=thresholds,
        nofilt_log_probs=nofilt_logp,
        quantized=quantized,
        artificial_std=math.sqrt(mc.artificial_noise_var / 2.0),
        channel_error_var=mc.channel_error_var,
        channel_error_block=mc.channel_error_block,
        seed=mc.seed,
        n_symbol_levels=constellation.n_levels,
    )

    sizes = [(j, min(_BLOCK_SIZE, mc.trials - j * _BLOCK_SIZE))
             for j in range((mc.trials + _BLOCK_SIZE - 1) // _BLOCK_SIZE)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(_simulate_block, [task] * len(sizes),
                                   [j for j, _ in sizes],
                                   [s for _, s in sizes],
                                   chunksize=4))
        errors = sum(counts)
    else:
        errors = sum(_simulate_block(task, j, s) for j, s in sizes)

    p = errors / mc.trials
    stderr = math.sqrt(max(p * (1.0 - p), 0.0) / mc.trials)
    return McResult(ser=p, stderr=stderr, errors=errors, trials=mc.trials,
                    effective_snr_db=effective_snr_db, detector=mc.detector)


_DEFAULT_DITHER_GRID = np.arange(-10.0, 40.0 + 1e-9, 0.1)


def optimum_dither(cfg: SystemConfig, spec: QuantizerSpec,
                   constellation: Constellation,
                   detector: str = DETECTOR_ML,
                   snr_db_grid=None) -> DitherPlan:
    """Artificial-noise variance that moves the SNR to the SER minimum.

    If the actual SNR is already at or below the SNR of the analytic SER
    minimum, no dithering can help and a zero-variance plan is returned
    with ``applied`` cleared.
    """
    grid = _DEFAULT_DITHER_GRID if snr_db_grid is None else snr_db_grid
    best = min_ser_over_snr(detector, cfg.oversampling, spec, constellation,
                            grid)
    if cfg.snr_db <= best.snr_db:
        return DitherPlan(variance=0.0, effective_snr_db=cfg.snr_db,
                          applied=False, analytic_min=best)
    power = constellation.average_power
    variance = power * (10.0 ** (-best.snr_db / 10.0)
                        - 10.0 ** (-cfg.snr_db / 10.0))
    return DitherPlan(variance=variance, effective_snr_db=best.snr_db,
                      applied=True, analytic_min=best)
