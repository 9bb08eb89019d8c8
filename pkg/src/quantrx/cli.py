"""Command-line front end: JSON run configs in, CSV/SVG artifacts out.

Every run writes its CSV outputs plus a ``manifest.json`` recording the
echoed configuration, a hash of the config file, package and library
versions, the wall time, and a SHA-256 digest of every output file, so
byte-identical reproduction is checkable. Files are written atomically
(temp file + rename).

Exit codes: 0 success, 2 configuration error, 3 compute-budget error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from importlib import metadata

import numpy as np

from .channel import AdcPowerSpec, adc_power, iso_power_configs
from .core import Constellation, QuantizerSpec, SystemConfig
from .detectors import (
    DETECTOR_CLT,
    DETECTOR_MINDIST,
    DETECTOR_ML,
    DETECTOR_NOFILT,
    ThresholdCrossingError,
    build_rule,
)
from .montecarlo import McConfig, optimum_dither, simulate_ser
from .optimizer import (
    SearchBudgetError,
    SearchSpace,
    optimize,
)
from .ser import (
    DETECTOR_UNQUANTIZED,
    min_ser_over_snr,
    ser_sweep,
)
from .stats import EnumerationLimitError, pmf_of_d

_THRESHOLD_DETECTORS = (DETECTOR_ML, DETECTOR_CLT, DETECTOR_MINDIST)
_ALL_DETECTORS = _THRESHOLD_DETECTORS + (DETECTOR_NOFILT, DETECTOR_UNQUANTIZED)


class ConfigError(Exception):
    """Configuration problem; the message names the offending key."""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _check_keys(section: dict, allowed, path: str):
    for key in section:
        if key not in allowed:
            name = f"{path}.{key}" if path else key
            raise ConfigError(f"{name}: unknown key")


def _require(section: dict, key: str, path: str = ""):
    if key not in section:
        name = f"{path}.{key}" if path else key
        raise ConfigError(f"{name}: missing")
    return section[key]


def _parse_quantizer(cfg: dict) -> QuantizerSpec:
    q = _require(cfg, "quantizer")
    if not isinstance(q, dict):
        raise ConfigError("quantizer: must be an object")
    _check_keys(q, {"bits", "step"}, "quantizer")
    try:
        return QuantizerSpec(bits=_require(q, "bits", "quantizer"),
                             step=_require(q, "step", "quantizer"))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"quantizer: {exc}") from None


def _parse_constellation(cfg: dict) -> Constellation:
    levels = _require(cfg, "constellation")
    if not isinstance(levels, list) or not levels:
        raise ConfigError("constellation: must be a non-empty list of levels")
    try:
        return Constellation(tuple(levels))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"constellation: {exc}") from None


def _parse_oversampling(cfg: dict) -> int:
    n = _require(cfg, "oversampling")
    if not isinstance(n, int) or n < 1:
        raise ConfigError("oversampling: must be a positive integer")
    return n


def _parse_snr_grid(cfg: dict, key: str = "snr_grid") -> np.ndarray:
    grid = _require(cfg, key)
    if isinstance(grid, dict):
        _check_keys(grid, {"start", "stop", "step"}, key)
        start = _require(grid, "start", key)
        stop = _require(grid, "stop", key)
        step = _require(grid, "step", key)
        if not step > 0:
            raise ConfigError(f"{key}.step: must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        if n < 1:
            raise ConfigError(f"{key}: empty")
        return np.round(start + step * np.arange(n), 9)
    if isinstance(grid, list):
        if not grid:
            raise ConfigError(f"{key}: empty")
        return np.asarray(grid, dtype=float)
    raise ConfigError(f"{key}: must be a list or start/stop/step object")


def _parse_detectors(cfg: dict, allowed, key: str = "detectors"):
    detectors = _require(cfg, key)
    if isinstance(detectors, str):
        detectors = [detectors]
    if not isinstance(detectors, list) or not detectors:
        raise ConfigError(f"{key}: must be a non-empty list")
    for d in detectors:
        if d not in allowed:
            raise ConfigError(f"{key}: unknown detector {d!r}")
    return detectors


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _atomic_write(path: str, data: str):
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".12g")
    return str(value)


def _write_csv(path: str, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    _atomic_write(path, "\n".join(lines) + "\n")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class _Run:
    """Collects outputs of one CLI invocation and writes the manifest."""

    def __init__(self, args, config):
        self.args = args
        self.config = config
        self.out_dir = args.out
        os.makedirs(self.out_dir, exist_ok=True)
        self.outputs = []
        self.summary = {}
        self.started = time.monotonic()

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def write_csv(self, name: str, header, rows) -> str:
        path = self.path(name)
        _write_csv(path, header, rows)
        self.outputs.append(path)
        return path

    def register(self, path: str):
        self.outputs.append(path)

    def finish(self):
        try:
            version = metadata.version("quantrx")
        except metadata.PackageNotFoundError:
            version = "unknown"
        with open(self.args.config, "rb") as fh:
            config_sha = hashlib.sha256(fh.read()).hexdigest()
        manifest = {
            "subcommand": self.args.command,
            "scenario": self.config.get("scenario"),
            "config": self.config,
            "config_sha256": config_sha,
            "version": version,
            "numpy": np.__version__,
            "wall_time_s": round(time.monotonic() - self.started, 3),
            "outputs": {os.path.basename(p): _sha256(p) for p in self.outputs},
            "summary": self.summary,
        }
        _atomic_write(self.path("manifest.json"),
                      json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _plot_curves(run, name, curves, xlabel, ylabel, logy=True):
    """Minimal static SVG line plot (one curve per label)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, x, y, style in curves:
        ax.plot(x, y, style, label=label, markersize=3, linewidth=1.0)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    path = run.path(name)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
    run.register(path)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

_COMMON_KEYS = {"scenario"}


def _cmd_ser_sweep(run):
    cfg = run.config
    _check_keys(cfg, _COMMON_KEYS | {"quantizer", "oversampling",
                                     "constellation", "detectors", "snr_grid",
                                     "pmf_method"}, "")
    spec = _parse_quantizer(cfg)
    n = _parse_oversampling(cfg)
    constellation = _parse_constellation(cfg)
    detectors = _parse_detectors(cfg, _ALL_DETECTORS)
    snr = _parse_snr_grid(cfg)
    method = cfg.get("pmf_method", "auto")
    rows = []
    curves = []
    for det in detectors:
        sweep = ser_sweep(det, snr, n, spec, constellation, method=method)
        rows.extend((float(s), det, float(v), float(c))
                    for s, v, c in zip(sweep.snr_db, sweep.ser,
                                       sweep.ser_component))
        curves.append((det, sweep.snr_db, sweep.ser, "-"))
    run.write_csv("ser_sweep.csv", ["snr_db", "detector", "ser",
                                    "ser_component"], rows)
    if run.args.plot:
        _plot_curves(run, "ser_sweep.svg", curves, "SNR (dB)", "SER")
    return 0


def _cmd_pmf(run):
    cfg = run.config
    _check_keys(cfg, _COMMON_KEYS | {"quantizer", "oversampling",
                                     "constellation", "snr_db", "amplitudes",
                                     "pmf_method"}, "")
    spec = _parse_quantizer(cfg)
    n = _parse_oversampling(cfg)
    constellation = _parse_constellation(cfg)
    snr_db = _require(cfg, "snr_db")
    amplitudes = cfg.get("amplitudes", list(constellation.levels))
    method = cfg.get("pmf_method", "auto")
    sys_cfg = SystemConfig.from_snr(n, float(snr_db), constellation)
    curves = []
    for amp in amplitudes:
        pmf = pmf_of_d(float(amp), sys_cfg, spec, method=method)
        rows = list(zip(pmf.grid, pmf.probs))
        run.write_csv(f"pmf_x{amp:g}.csv", ["d", "prob"], rows)
        curves.append((f"x={amp:g}", pmf.grid, np.maximum(pmf.probs, 1e-12), "."))
    if run.args.plot:
        _plot_curves(run, "pmf.svg", curves, "detection variable", "probability")
    return 0


def _cmd_thresholds(run):
    cfg = run.config
    _check_keys(cfg, _COMMON_KEYS | {"quantizer", "oversampling",
                                     "constellation", "snr_db", "detectors"},
                "")
    spec = _parse_quantizer(cfg)
    n = _parse_oversampling(cfg)
    constellation = _parse_constellation(cfg)
    snr_db = _require(cfg, "snr_db")
    detectors = _parse_detectors(cfg, _THRESHOLD_DETECTORS)
    sys_cfg = SystemConfig.from_snr(n, float(snr_db), constellation)
    rows = []
    for det in detectors:
        rule = build_rule(det, sys_cfg, spec, constellation)
        rows.extend((det, i + 1, float(b))
                    for i, b in enumerate(rule.thresholds))
    run.write_csv("thresholds.csv", ["detector", "i", "b_i"], rows)
    return 0


def _cmd_mc(run):
    cfg = run.config
    _check_keys(cfg, _COMMON_KEYS | {"quantizer", "oversampling",
                                     "constellation", "snr_grid", "mc"}, "")
    spec = _parse_quantizer(cfg)
    n = _parse_oversampling(cfg)
    constellation = _parse_constellation(cfg)
    snr = _parse_snr_grid(cfg)
    mc_cfg = cfg.get("mc", {})
    if not isinstance(mc_cfg, dict):
        raise ConfigError("mc: must be an object")
    _check_keys(mc_cfg, {"trials", "seed", "dither", "channel_error_var",
                         "channel_error_block", "detector"}, "mc")
    args = run.args
    trials = args.trials if args.trials is not None else mc_cfg.get("trials", 10 ** 6)
    seed = args.seed if args.seed is not None else mc_cfg.get("seed", 0)
    dither = args.dither if args.dither is not None else mc_cfg.get("dither", "off")
    ch_err = args.ch_err if args.ch_err is not None else mc_cfg.get(
        "channel_error_var", 0.0)
    detector = mc_cfg.get("detector", DETECTOR_ML)
    if detector not in _ALL_DETECTORS:
        raise ConfigError(f"mc.detector: unknown detector {detector!r}")
    if not (isinstance(trials, int) and trials >= 1):
        raise ConfigError("mc.trials: must be a positive integer")

    rows = []
    for snr_db in snr:
        sys_cfg = SystemConfig.from_snr(n, float(snr_db), constellation)
        variance = 0.0
        if dither == "auto":
            variance = optimum_dither(sys_cfg, spec, constellation,
                                      detector=detector).variance
        elif dither != "off":
            variance = float(dither)
        mc = McConfig(trials=trials, seed=int(seed),
                      artificial_noise_var=variance,
                      channel_error_var=float(ch_err),
                      channel_error_block=int(
                          mc_cfg.get("channel_error_block", 1)),
                      detector=detector)
        result = simulate_ser(sys_cfg, spec, constellation, mc,
                              workers=run.args.threads)
        analytic = _analytic_ser_at(detector, result.effective_snr_db, n, spec,
                                    constellation)
        rows.append((float(snr_db), result.ser, result.stderr, analytic))
    run.write_csv("mc.csv", ["snr_db", "ser_mc", "stderr", "ser_analytic"],
                  rows)
    run.summary["seed"] = int(seed)
    run.summary["trials"] = trials
    if run.args.plot:
        arr = np.asarray([(r[0], r[1], r[3]) for r in rows], dtype=float)
        _plot_curves(run, "mc.svg",
                     [("simulated", arr[:, 0], np.maximum(arr[:, 1], 1e-12), "o"),
                      ("analytic", arr[:, 0], np.maximum(arr[:, 2], 1e-12), "-")],
                     "SNR (dB)", "SER")
    return 0


def _analytic_ser_at(detector, snr_db, n, spec, constellation):
    sweep = ser_sweep(detector, [snr_db], n, spec, constellation)
    return float(sweep.ser[0])


def _cmd_power(run):
    cfg = run.config
    _check_keys(cfg, _COMMON_KEYS | {"power"}, "")
    p = _require(cfg, "power")
    if not isinstance(p, dict):
        raise ConfigError("power: must be an object")
    _check_keys(p, {"bits", "branches", "sampling_hz", "gamma", "zeta", "nu",
                    "bit_range"}, "power")
    try:
        base = AdcPowerSpec(bits=_require(p, "bits", "power"),
                            branches=_require(p, "branches", "power"),
                            sampling_hz=p.get("sampling_hz", 1.0),
                            gamma=p.get("gamma", 1.0),
                            zeta=p.get("zeta", 1), nu=p.get("nu", 2))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"power: {exc}") from None
    bit_range = p.get("bit_range", list(range(1, 9)))
    rows = [(bits, branches,
             adc_power(AdcPowerSpec(bits=bits, branches=branches,
                                    sampling_hz=base.sampling_hz,
                                    gamma=base.gamma, zeta=base.zeta,
                                    nu=base.nu)))
            for bits, branches in iso_power_configs(base, bit_range)]
    run.write_csv("power.csv", ["bits", "N", "power_watts"], rows)
    return 0


def _cmd_optimize(run):
    cfg = run.config
    _check_keys(cfg, _COMMON_KEYS | {"quantizer", "oversampling", "detector",
                                     "snr_grid", "optimizer"}, "")
    spec = _parse_quantizer(cfg)
    n = _parse_oversampling(cfg)
    snr = _parse_snr_grid(cfg)
    detector = cfg.get("detector", DETECTOR_ML)
    if detector not in _ALL_DETECTORS:
        raise ConfigError(f"detector: unknown detector {detector!r}")
    opt = _require(cfg, "optimizer")
    if not isinstance(opt, dict):
        raise ConfigError("optimizer: must be an object")
    _check_keys(opt, {"mode", "grids", "budget"}, "optimizer")
    try:
        space = SearchSpace(mode=_require(opt, "mode", "optimizer"),
                            grids=tuple(tuple(g) for g in
                                        _require(opt, "grids", "optimizer")))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"optimizer: {exc}") from None
    kwargs = {}
    if "budget" in opt:
        kwargs["budget"] = int(opt["budget"])
    result = optimize(space, n, spec, detector=detector, snr_db_grid=snr,
                      **kwargs)
    n_params = len(space.grids)
    rows = []
    for point in result.landscape:
        padded = list(point.params) + [""] * (4 - n_params)
        rows.append(tuple(padded) + (point.min_ser, point.argmin_snr_db))
    run.write_csv("landscape.csv",
                  ["a1", "a2", "a3", "a4", "min_ser", "argmin_snr_db"], rows)
    run.summary["best"] = {"params": list(result.best.params),
                           "min_ser": result.best.min_ser,
                           "argmin_snr_db": result.best.argmin_snr_db,
                           "skipped_cells": result.skipped}
    print(f"optimum: params={result.best.params} "
          f"min_ser={result.best.min_ser:.6g} "
          f"at {result.best.argmin_snr_db:.2f} dB")
    if run.args.plot and n_params == 1:
        arr = np.asarray([(p.params[0], p.min_ser) for p in result.landscape])
        _plot_curves(run, "landscape.svg",
                     [("min SER", arr[:, 0], arr[:, 1], "-o")],
                     "constellation parameter", "minimum SER")
    return 0


def _cmd_per_symbol(run):
    cfg = run.config
    _check_keys(cfg, _COMMON_KEYS | {"quantizer", "oversampling",
                                     "constellation", "detector", "snr_grid",
                                     "snr_db"}, "")
    spec = _parse_quantizer(cfg)
    n = _parse_oversampling(cfg)
    constellation = _parse_constellation(cfg)
    detector = cfg.get("detector", DETECTOR_ML)
    if detector not in _THRESHOLD_DETECTORS:
        raise ConfigError(f"detector: unknown detector {detector!r}")
    if "snr_db" in cfg:
        snr_db = float(cfg["snr_db"])
    else:
        snr = _parse_snr_grid(cfg)
        snr_db = min_ser_over_snr(detector, n, spec, constellation, snr).snr_db
    sweep = ser_sweep(detector, [snr_db], n, spec, constellation)
    rows = [(float(level), float(rate))
            for level, rate in zip(constellation.levels, sweep.per_symbol[0])]
    run.write_csv("per_symbol.csv", ["level", "error_rate"], rows)
    run.summary["snr_db"] = snr_db
    run.summary["ser"] = float(sweep.ser[0])
    return 0


_COMMANDS = {
    "ser-sweep": _cmd_ser_sweep,
    "pmf": _cmd_pmf,
    "thresholds": _cmd_thresholds,
    "mc": _cmd_mc,
    "power": _cmd_power,
    "optimize": _cmd_optimize,
    "per-symbol": _cmd_per_symbol,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="quantrx",
        description="Error-rate analysis of oversampled low-resolution "
                    "quantized receivers")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--plot", action="store_true",
                       help="also write static SVG plots")
        p.add_argument("--threads", type=int, default=1,
                       help="worker processes for Monte Carlo blocks")
        if name == "mc":
            p.add_argument("--trials", type=int, default=None)
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--dither", default=None,
                           help="off | auto | explicit variance")
            p.add_argument("--ch-err", dest="ch_err", type=float, default=None,
                           help="channel estimation error variance")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            config = json.load(fh)
        if not isinstance(config, dict):
            raise ConfigError("config: must be a JSON object")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 2

    run = _Run(args, config)
    try:
        status = _COMMANDS[args.command](run)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SearchBudgetError, EnumerationLimitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ThresholdCrossingError as exc:
        print(f"error: degenerate configuration: {exc}", file=sys.stderr)
        return 2
    run.finish()
    return status


if __name__ == "__main__":
    sys.exit(main())
