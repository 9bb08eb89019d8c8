"""Grid search for symbol constellations minimizing the achievable SER.

The objective of one grid cell is the minimum over an SNR grid of the
exact analytic QAM SER for the constellation built from the cell's
parameters. The objective is piecewise-non-smooth, so the search is an
exhaustive scan of an explicit parameter grid; cells violating the
ordering constraint are skipped, and cells whose decision rule degenerates
at every SNR are recorded with NaN and excluded from the minimum.

Two constellation modes:

* ``fixed-inner`` - inner amplitudes locked to +-1, free outer levels
  a_1 < a_2 < ... (all > 1); used for 1-bit quantization.
* ``free-levels`` - all positive amplitudes free, a_1 < ... < a_m, with the
  quantizer step fixed by the caller; used for multi-bit quantization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Constellation, QuantizerSpec
from .detectors import DETECTOR_ML, ThresholdCrossingError
from .ser import min_ser_over_snr

__all__ = [
    "SearchBudgetError",
    "SearchSpace",
    "LandscapePoint",
    "OptimizeResult",
    "MODE_FIXED_INNER",
    "MODE_FREE_LEVELS",
    "constellation_for",
    "evaluate_constellation",
    "optimize",
    "plateau_onset",
]

MODE_FIXED_INNER = "fixed-inner"
MODE_FREE_LEVELS = "free-levels"

DEFAULT_BUDGET = 50_000_000  # grid cells x SNR points


class SearchBudgetError(RuntimeError):
    """Raised when a search would exceed the configured compute budget."""


@dataclass(frozen=True)
class SearchSpace:
    """Per-parameter scan grids with the ordering constraint a_1 < a_2 < ...

    ``grids`` is a tuple of (start, stop, step) triples, one per free
    parameter (1 to 4). Grid values are rounded to 1e-9 to keep cell
    coordinates exact.
    """

    mode: str
    grids: tuple

    def __post_init__(self):
        if self.mode not in (MODE_FIXED_INNER, MODE_FREE_LEVELS):
            raise ValueError(f"unknown search mode {self.mode!r}")
        if not 1 <= len(self.grids) <= 4:
            raise ValueError("need between 1 and 4 parameter grids")
        grids = tuple((float(a), float(b), float(s)) for a, b, s in self.grids)
        for a, b, s in grids:
            if not (s > 0 and b >= a):
                raise ValueError("each grid needs stop >= start and step > 0")
        object.__setattr__(self, "grids", grids)

    def axis_values(self, index: int) -> np.ndarray:
        a, b, s = self.grids[index]
        n = int(math.floor((b - a) / s + 1e-9)) + 1
        return np.round(a + s * np.arange(n), 9)

    def cells(self):
        """Yield feasible parameter tuples in lexicographic order."""
        axes = [self.axis_values(i) for i in range(len(self.grids))]
        lower = 1.0 if self.mode == MODE_FIXED_INNER else 0.0

        def rec(prefix, depth):
            for v in axes[depth]:
                if v <= (prefix[-1] if prefix else lower):
                    continue
                cur = prefix + (float(v),)
                if depth + 1 == len(axes):
                    yield cur
                else:
                    yield from rec(cur, depth + 1)

        yield from rec((), 0)

    def cell_count(self) -> int:
        return sum(1 for _ in self.cells())


@dataclass(frozen=True)
class LandscapePoint:
    """Search-grid cell: parameters, its best SER, and where it occurs."""

    params: tuple
    min_ser: float
    argmin_snr_db: float


@dataclass(frozen=True, eq=False)
class OptimizeResult:
    best: LandscapePoint
    landscape: list
    skipped: int  # cells with no valid decision rule anywhere on the grid


def constellation_for(mode: str, params) -> Constellation:
    """Build the symmetric constellation described by one grid cell."""
    params = tuple(float(p) for p in params)
    if mode == MODE_FIXED_INNER:
        return Constellation.from_positive_levels((1.0,) + params)
    if mode == MODE_FREE_LEVELS:
        return Constellation.from_positive_levels(params)
    raise ValueError(f"unknown search mode {mode!r}")


def evaluate_constellation(levels, oversampling: int, spec: QuantizerSpec,
                           detector: str, snr_db_grid,
                           method: str = "auto") -> LandscapePoint:
    """Minimum achievable SER of one explicit constellation."""
    constellation = levels if isinstance(levels, Constellation) \
        else Constellation(tuple(levels))
    best = min_ser_over_snr(detector, oversampling, spec, constellation,
                            snr_db_grid, method=method)
    return LandscapePoint(params=tuple(constellation.levels),
                          min_ser=best.ser, argmin_snr_db=best.snr_db)


def optimize(space: SearchSpace, oversampling: int, spec: QuantizerSpec,
             detector: str = DETECTOR_ML, snr_db_grid=None,
             budget: int = DEFAULT_BUDGET, method: str = "auto") -> OptimizeResult:
    """Exhaustive scan of the search space; returns the grid optimum.

    Ties resolve to the lexicographically smallest parameter tuple (the
    scan order). Raises ``SearchBudgetError`` when cells x SNR points
    exceed ``budget``.
    """
    if snr_db_grid is None:
        raise ValueError("an SNR grid is required")
    snr_db_grid = np.atleast_1d(np.asarray(snr_db_grid, dtype=float))
    if snr_db_grid.size == 0:
        raise ValueError("snr grid must be non-empty")
    n_cells = space.cell_count()
    if n_cells == 0:
        raise ValueError("search space has no feasible cells")
    if n_cells * snr_db_grid.size > budget:
        raise SearchBudgetError(
            f"search budget exceeded: {n_cells} cells x {snr_db_grid.size} "
            f"SNR points > {budget}")

    landscape = []
    best = None
    skipped = 0
    for params in space.cells():
        constellation = constellation_for(space.mode, params)
        try:
            m = min_ser_over_snr(detector, oversampling, spec, constellation,
                                 snr_db_grid, method=method)
            point = LandscapePoint(params, m.ser, m.snr_db)
        except (ThresholdCrossingError, ValueError):
            point = LandscapePoint(params, math.nan, math.nan)
            skipped += 1
        landscape.append(point)
        if not math.isnan(point.min_ser) and (
                best is None or point.min_ser < best.min_ser):
            best = point
    if best is None:
        raise ValueError("no grid cell produced a valid decision rule")
    return OptimizeResult(best=best, landscape=landscape, skipped=skipped)


def plateau_onset(result: OptimizeResult, space: SearchSpace,
                  param_index: int | None = None,
                  rel_tol: float = 0.02):
    """Detect a plateau of the landscape along one parameter axis.

    Other parameters are pinned to the best cell's values; the scan
    parameter's 1-D slice is then checked from the right: the onset is the
    smallest grid value from which every later cell stays within
    ``rel_tol`` of the final value. Returns ``(onset, plateaued)`` where
    ``plateaued`` says whether the top decile of the axis is flat.
    """
    if param_index is None:
        param_index = len(space.grids) - 1
    best = result.best.params
    slice_points = sorted(
        (p for p in result.landscape
         if not math.isnan(p.min_ser)
         and all(p.params[i] == best[i]
                 for i in range(len(best)) if i != param_index)),
        key=lambda p: p.params[param_index])
    if len(slice_points) < 3:
        return None, False
    values = np.array([p.params[param_index] for p in slice_points])
    sers = np.array([p.min_ser for p in slice_points])
    final = sers[-1]
    within = np.abs(sers - final) <= rel_tol * final
    onset_idx = len(within) - 1
    while onset_idx > 0 and within[onset_idx - 1]:
        onset_idx -= 1
    onset = float(values[onset_idx])
    decile = max(2, int(math.ceil(len(values) / 10)))
    plateaued = bool(within[-decile:].all())
    return onset, plateaued
