"""Acceptance suite: one test per shipped-behavior criterion.

Each criterion prints a PASS/FAIL line in the terminal summary. The
expected numbers are the reference values this package is required to
reproduce; tolerances are fixed here, not tuned at runtime.
"""

import json
import math
import os
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

import conftest
from quantrx import (
    Constellation,
    McConfig,
    QuantizerSpec,
    SearchSpace,
    SystemConfig,
    clt_thresholds,
    composition_count,
    d_moments,
    detection_value,
    enumerate_compositions,
    evaluate_constellation,
    min_ser_over_snr,
    mindist_thresholds,
    ml_thresholds,
    optimize,
    optimum_dither,
    plateau_onset,
    pmf_of_d,
    ser_ask,
    ser_nofilt,
    ser_sweep,
    simulate_ser,
)
from quantrx.quantizer import cond_mean, cond_variance, level_values, log_level_probs

C16 = Constellation.square_qam(16)
C36 = Constellation.square_qam(36)
C64 = Constellation.square_qam(64)
RECIPES = os.path.join(os.path.dirname(__file__), os.pardir, "recipes")

# iso-power quantizer/oversampling trios with the step sizes used for each
# constellation (symbols spread evenly over the quantization range)
ISO_16 = ((1, 64, 2.0), (2, 32, 2.0), (3, 16, 1.0))
ISO_64 = ((1, 64, 2.0), (2, 32, 4.0), (3, 16, 2.0))

FULL_GRID = np.round(np.arange(-10.0, 40.0 + 1e-9, 0.1), 9)


@contextmanager
def criterion(number, description):
    try:
        yield
    except BaseException:
        conftest.ACCEPTANCE_RESULTS.append(
            f"criterion {number:2d} FAIL  {description}")
        raise
    conftest.ACCEPTANCE_RESULTS.append(
        f"criterion {number:2d} PASS  {description}")


def load_recipe(name):
    with open(os.path.join(RECIPES, name)) as fh:
        return json.load(fh)


def snr_grid_of(recipe):
    g = recipe["snr_grid"]
    n = int(math.floor((g["stop"] - g["start"]) / g["step"] + 1e-9)) + 1
    return np.round(g["start"] + g["step"] * np.arange(n), 9)


def search_space_of(recipe):
    opt = recipe["optimizer"]
    return SearchSpace(opt["mode"], tuple(tuple(g) for g in opt["grids"]))


def crossings(snr, a, b):
    sign = np.sign(a - b)
    return snr[np.nonzero(np.diff(sign) != 0)[0]]


def snr_at_target(snr, curve, target):
    idx = np.nonzero(curve <= target)[0]
    assert idx.size and idx[0] > 0, "target must be bracketed by the grid"
    i = int(idx[0])
    x0, x1 = snr[i - 1], snr[i]
    y0, y1 = math.log(curve[i - 1]), math.log(curve[i])
    return x0 + (math.log(target) - y0) * (x1 - x0) / (y1 - y0)


def test_criterion_1_observation_count_table():
    with criterion(1, "two-branch 2-bit observation table, exact values"):
        start = time.monotonic()
        expected = {
            (2, 0, 0, 0): Fraction(-3, 2), (1, 1, 0, 0): Fraction(-1),
            (0, 2, 0, 0): Fraction(-1, 2), (1, 0, 1, 0): Fraction(-1, 2),
            (1, 0, 0, 1): Fraction(0), (0, 1, 1, 0): Fraction(0),
            (0, 1, 0, 1): Fraction(1, 2), (0, 0, 2, 0): Fraction(1, 2),
            (0, 0, 1, 1): Fraction(1), (0, 0, 0, 2): Fraction(3, 2),
        }
        for step in (1.0, 2.0):
            spec = QuantizerSpec(2, step)
            got = {k: detection_value(k, spec, 2)
                   for k in enumerate_compositions(2, 4)}
            assert set(got) == set(expected)
            for k, frac in expected.items():
                assert got[k] == float(frac * Fraction(step))
        assert time.monotonic() - start < 1.0


def test_criterion_2_composition_counts_and_pmf_routes():
    with criterion(2, "composition counts and convolution=enumeration PMFs"):
        start = time.monotonic()
        assert composition_count(64, 2) == 65
        assert composition_count(32, 4) == 6545
        assert composition_count(16, 8) == 245157
        cases = (
            (QuantizerSpec(1, 2.0), 64, C16, 1.0),
            (QuantizerSpec(2, 2.0), 32, C16, 1.0),
            (QuantizerSpec(3, 1.0), 16, C16, 3.0),
        )
        for spec, n, constellation, x in cases:
            cfg = SystemConfig.from_snr(n, 0.0, constellation)
            conv = pmf_of_d(x, cfg, spec, method="convolution")
            enum = pmf_of_d(x, cfg, spec, method="enumeration")
            assert np.max(np.abs(conv.probs - enum.probs)) <= 1e-12
        assert time.monotonic() - start < 30.0


def test_criterion_3_one_bit_detector_equivalence():
    with criterion(3, "1-bit threshold-ML equals unfiltered ML bit-exactly"):
        spec = QuantizerSpec(1, 2.0)
        for snr in np.arange(-10.0, 20.0 + 1e-9, 0.5):
            cfg = SystemConfig.from_snr(64, float(snr), C16)
            rule = ml_thresholds(cfg, spec, C16)
            ask, _ = ser_ask(rule, cfg, spec, C16)
            assert ask == ser_nofilt(cfg, spec, C16)


@pytest.fixture(scope="module")
def iso_sweeps():
    """ML SER curves of the iso-power trios on a 0.05 dB grid."""
    snr = np.round(np.arange(-10.0, 20.0 + 1e-9, 0.05), 9)
    out = {}
    for constellation, trio in ((C16, ISO_16), (C64, ISO_64)):
        for bits, n, step in trio:
            sweep = ser_sweep("ml", snr, n, QuantizerSpec(bits, step),
                              constellation)
            out[(constellation.qam_size, bits)] = sweep.ser
    return snr, out


def test_criterion_4_one_bit_high_snr_floor():
    with criterion(4, "1-bit 16-QAM SER floor 0.75 at 40 dB"):
        ser = ser_sweep("ml", [40.0], 64, QuantizerSpec(1, 2.0), C16).ser[0]
        assert abs(ser - 0.75) <= 1e-3


def test_criterion_5_snr_gap_to_unquantized():
    with criterion(5, "1-bit vs unquantized SNR gaps 2.3/3.2/6.0 dB"):
        snr = np.round(np.arange(-8.0, 6.5 + 1e-9, 0.02), 9)
        spec = QuantizerSpec(1, 2.0)
        quantized = ser_sweep("ml", snr, 64, spec, C16).ser
        reference = ser_sweep("unquantized", snr, 64, spec, C16).ser
        for target, expected in ((1e-1, 2.3), (1e-2, 3.2), (1e-3, 6.0)):
            gap = (snr_at_target(snr, quantized, target)
                   - snr_at_target(snr, reference, target))
            assert gap == pytest.approx(expected, abs=0.2), f"SER {target:g}"


def test_criterion_6_iso_power_crossovers(iso_sweeps):
    with criterion(6, "iso-power crossovers 16-QAM ~2.9; 64-QAM ~2.2/~10.8"):
        snr, curves = iso_sweeps
        # 16-QAM: single 1-bit/2-bit crossover near 2.9 dB
        cross = crossings(snr, curves[(16, 1)], curves[(16, 2)])
        assert cross.size == 1
        assert cross[0] == pytest.approx(2.9, abs=0.3)
        below = snr < cross[0]
        above = (snr > cross[0]) & (snr <= 15.0)
        assert np.all(curves[(16, 1)][below] <= curves[(16, 2)][below])
        assert np.all(curves[(16, 2)][above]
                      <= np.minimum(curves[(16, 1)], curves[(16, 3)])[above])
        # 64-QAM: 1-bit/2-bit near 2.2 dB, 2-bit/3-bit near 10.8 dB
        c12 = crossings(snr, curves[(64, 1)], curves[(64, 2)])
        assert c12[0] == pytest.approx(2.2, abs=0.3)
        c23 = crossings(snr, curves[(64, 2)], curves[(64, 3)])
        assert c23.size == 1
        assert c23[0] == pytest.approx(10.8, abs=0.3)
        window = (snr > c12[0]) & (snr < c23[0])
        assert np.all(curves[(64, 2)][window]
                      <= np.minimum(curves[(64, 1)], curves[(64, 3)])[window])


def test_criterion_7_64qam_floors():
    with criterion(7, "64-QAM minimum SER: 1-bit ~0.24, 2-bit 1e-2"):
        m1 = min_ser_over_snr("ml", 64, QuantizerSpec(1, 2.0), C64, FULL_GRID)
        assert m1.ser == pytest.approx(0.24, rel=0.10)
        m2 = min_ser_over_snr("ml", 32, QuantizerSpec(2, 4.0), C64, FULL_GRID)
        assert m2.ser == pytest.approx(1e-2, rel=0.10)


# per-symbol error rates at the optimum SNR, 1-bit, 64 branches; the
# optimized constellations place the outer level at the top of the search
# range (17), where the reference rates are reproduced
TABLE_PER_SYMBOL = {
    "classical-16": (C16, (3.9e-4, 6.0e-4, 6.0e-4, 3.9e-4)),
    "classical-36": (C36, (4.6e-2, 7.1e-2, 1.3e-2, 1.1e-2, 7.1e-2, 4.6e-2)),
    "classical-64": (C64, (1.0e-1, 2.9e-1, 9.0e-2, 3.7e-2, 2.8e-2, 9.0e-2,
                           2.9e-1, 1.0e-1)),
    "optimized-16": (Constellation.from_positive_levels([1.0, 17.0]),
                     (7.6e-41, 5.6e-7, 3.3e-7, 7.6e-41)),
    "optimized-36": (Constellation.from_positive_levels([1.0, 3.3, 17.0]),
                     (7.6e-12, 9.2e-3, 7.4e-3, 5.1e-3, 9.2e-3, 7.6e-12)),
    "optimized-64": (Constellation.from_positive_levels([1.0, 3.1, 5.7, 17.0]),
                     (2.2e-5, 7.6e-2, 7.4e-2, 7.1e-2, 5.4e-2, 7.4e-2, 7.6e-2,
                      2.2e-5)),
}


def test_criterion_8_per_symbol_tables():
    with criterion(8, "per-symbol error rates at optimum SNR (all 36 rates)"):
        spec = QuantizerSpec(1, 2.0)
        for name, (constellation, expected) in TABLE_PER_SYMBOL.items():
            best = min_ser_over_snr("ml", 64, spec, constellation, FULL_GRID)
            sweep = ser_sweep("ml", [best.snr_db], 64, spec, constellation)
            got = sweep.per_symbol[0]
            assert got.size == len(expected)
            for level, g, e in zip(constellation.levels, got, expected):
                if e < 1e-9:  # deep-tail entries: factor-of-two band
                    assert e / 2 <= g <= e * 2, (name, level)
                else:
                    assert g == pytest.approx(e, rel=0.10), (name, level)


@pytest.fixture(scope="module")
def optimizer_runs():
    """The four shipped optimization recipes, run at their recipe grids."""
    start = time.monotonic()
    runs = {}
    for key, recipe_name in (
            ("16-1bit", "optimize_16qam_1bit_n64.json"),
            ("36-1bit", "optimize_36qam_1bit_n64.json"),
            ("64-1bit", "optimize_64qam_1bit_n64.json"),
            ("64-2bit", "optimize_64qam_2bit_n32.json")):
        recipe = load_recipe(recipe_name)
        spec = QuantizerSpec(**recipe["quantizer"])
        space = search_space_of(recipe)
        result = optimize(space, recipe["oversampling"], spec,
                          detector=recipe["detector"],
                          snr_db_grid=snr_grid_of(recipe))
        runs[key] = (space, result)
    runs["elapsed"] = time.monotonic() - start
    return runs


def test_criterion_9_optimizer_goldens(optimizer_runs):
    with criterion(9, "constellation optimization minima at recipe grids"):
        spec1 = QuantizerSpec(1, 2.0)

        space, res = optimizer_runs["16-1bit"]
        by_a1 = {p.params[0]: p.min_ser for p in res.landscape}
        assert by_a1[3.0] == pytest.approx(9.8e-4, rel=0.15)
        assert by_a1[8.0] == pytest.approx(4.5e-7, rel=0.15)
        assert res.best.min_ser == pytest.approx(4.5e-7, rel=0.15)
        onset, plateaued = plateau_onset(res, space)
        assert plateaued and onset <= 9.0

        classical36 = evaluate_constellation(C36, 64, spec1, "ml", FULL_GRID)
        assert classical36.min_ser == pytest.approx(8.4e-2, rel=0.15)
        space, res = optimizer_runs["36-1bit"]
        assert res.best.min_ser == pytest.approx(1.0e-2, rel=0.15)
        assert res.best.params[0] == pytest.approx(3.3, abs=0.2)
        onset, plateaued = plateau_onset(res, space, param_index=1)
        assert plateaued and onset <= 11.5

        classical64 = evaluate_constellation(C64, 64, spec1, "ml", FULL_GRID)
        assert classical64.min_ser == pytest.approx(2.4e-1, rel=0.15)
        space, res = optimizer_runs["64-1bit"]
        assert res.best.min_ser == pytest.approx(1.0e-1, rel=0.15)
        assert res.best.params[0] == pytest.approx(3.1, abs=0.2)
        assert res.best.params[1] == pytest.approx(5.7, abs=0.3)
        onset, plateaued = plateau_onset(res, space, param_index=2)
        assert plateaued and onset <= 15.0

        classical64_2 = evaluate_constellation(
            C64, 32, QuantizerSpec(2, 4.0), "ml", FULL_GRID)
        assert classical64_2.min_ser == pytest.approx(1.1e-2, rel=0.15)
        space, res = optimizer_runs["64-2bit"]
        assert res.best.min_ser == pytest.approx(3.2e-4, rel=0.15)

        assert optimizer_runs["elapsed"] < 600.0


MC_TRIALS = 10 ** 6

# (bits, branches, step) per constellation, simulated with two detectors at
# three SNR points each: 12 configurations in total
MC_MATRIX = [
    (C16, ISO_16, (-2.0, 2.0, 6.0)),
    (C64, ISO_64, (0.0, 3.0, 6.0)),
]


def test_criterion_10_monte_carlo_agreement():
    with criterion(10, "Monte Carlo within 3 sigma; dithered runs hit minima"):
        seed = 20240
        for constellation, trio, snrs in MC_MATRIX:
            for bits, n, step in trio:
                spec = QuantizerSpec(bits, step)
                for detector in ("ml", "mindist"):
                    for snr in snrs:
                        seed += 1
                        cfg = SystemConfig.from_snr(n, snr, constellation)
                        res = simulate_ser(
                            cfg, spec, constellation,
                            McConfig(trials=MC_TRIALS, seed=seed,
                                     detector=detector))
                        ref = float(ser_sweep(detector, [snr], n, spec,
                                              constellation).ser[0])
                        assert abs(res.ser - ref) <= 3.0 * res.stderr, (
                            constellation.qam_size, bits, detector, snr)

        # artificial-noise dithering at the reference optimum effective SNRs
        dither_cases = (
            (C16, QuantizerSpec(1, 2.0), 64, 15.0, 5.6),
            (C64, QuantizerSpec(1, 2.0), 64, 10.0, 3.8),
            (C64, QuantizerSpec(2, 4.0), 32, 20.0, 12.2),
        )
        for constellation, spec, n, actual_snr, reference_opt in dither_cases:
            cfg = SystemConfig.from_snr(n, actual_snr, constellation)
            plan = optimum_dither(cfg, spec, constellation)
            assert plan.applied
            assert plan.effective_snr_db == pytest.approx(reference_opt,
                                                          abs=0.25)
            seed += 1
            res = simulate_ser(cfg, spec, constellation,
                               McConfig(trials=MC_TRIALS, seed=seed,
                                        artificial_noise_var=plan.variance))
            assert abs(res.ser - plan.analytic_min.ser) <= 3.0 * res.stderr


def test_criterion_11_property_suites():
    with criterion(11, "normalization, moment identities, antisymmetry, "
                       "ML dominance"):
        rng = np.random.default_rng(2024)

        # PMF normalization within 1e-12
        for _ in range(20):
            spec = QuantizerSpec(int(rng.integers(1, 4)),
                                 float(rng.uniform(0.5, 4.0)))
            cfg = SystemConfig.from_snr(int(rng.integers(2, 33)),
                                        float(rng.uniform(-8, 15)), C16)
            pmf = pmf_of_d(float(rng.uniform(-4, 4)), cfg, spec)
            assert abs(pmf.probs.sum() - 1.0) <= 1e-12
            assert abs(pmf.log_norm) <= 1e-12

        # detection-variable moment identities within 1e-9
        for bits in (1, 2, 3):
            spec = QuantizerSpec(bits, 2.0)
            for n in (2, 4, 8, 16):
                cfg = SystemConfig.from_snr(n, 2.0, C16)
                for x in C16.levels:
                    mom = d_moments(x, cfg, spec)
                    pmf = pmf_of_d(x, cfg, spec)
                    assert abs(pmf.mean - mom.mean) <= 1e-9
                    assert abs(pmf.variance - mom.variance) <= 1e-9

        # closed-form conditional moments vs direct expectation, 200 draws
        for _ in range(200):
            spec = QuantizerSpec(int(rng.integers(1, 5)),
                                 float(rng.uniform(0.2, 4.0)))
            x = float(rng.uniform(-10, 10))
            s = float(rng.uniform(0.05, 5.0))
            p = np.exp(log_level_probs(x, s, spec))
            z = level_values(spec)
            mu = float(np.sum(z * p))
            var = float(np.sum(z ** 2 * p) - mu ** 2)
            assert abs(cond_mean(x, s, spec) - mu) <= 1e-10 * max(1, abs(mu))
            assert abs(cond_variance(x, s, spec) - var) <= 1e-10 * max(1, var)

        # threshold antisymmetry for symmetric constellations
        for constellation, trio in ((C16, ISO_16), (C64, ISO_64)):
            for bits, n, step in trio:
                spec = QuantizerSpec(bits, step)
                cfg = SystemConfig.from_snr(n, 4.0, constellation)
                for rule in (clt_thresholds(cfg, spec, constellation),
                             mindist_thresholds(cfg, spec, constellation)):
                    assert np.allclose(rule.thresholds,
                                       -rule.thresholds[::-1], atol=1e-12)
                ml = ml_thresholds(cfg, spec, constellation).thresholds
                assert np.all(np.abs(ml + ml[::-1]) <= step / n + 1e-12)

        # ML dominance over both suboptimal rules at every grid SNR where
        # the suboptimal rule exists (the CLT rule degenerates once the
        # detection variance underflows at extreme SNR)
        snr = np.arange(-10.0, 20.1, 0.5)
        for constellation, trio in ((C16, ISO_16), (C64, ISO_64)):
            for bits, n, step in trio[:2]:
                spec = QuantizerSpec(bits, step)
                ml = ser_sweep("ml", snr, n, spec, constellation).ser
                clt = ser_sweep("clt", snr, n, spec, constellation).ser
                md = ser_sweep("mindist", snr, n, spec, constellation).ser
                assert np.all(np.isfinite(ml))
                ok = np.isfinite(clt)
                assert ok.sum() > snr.size // 2
                assert np.all(ml[ok] <= clt[ok] * (1 + 1e-12) + 1e-300)
                ok = np.isfinite(md)
                assert np.all(ml[ok] <= md[ok] * (1 + 1e-12) + 1e-300)
