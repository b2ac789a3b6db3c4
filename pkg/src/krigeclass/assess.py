"""Closeness between reference and test class-proportion maps.

``S`` is the per-pixel mean squared proportion difference over classes.
``D`` is sum f1 log2(f1 / f2) in bits, i.e. the Kullback-Leibler divergence
of the test proportions from the reference; it is reported under the name
"cross entropy".
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kbsc import ProbabilityMap
from .raster import RasterGrid, upscale_mean


@dataclass(frozen=True)
class Summary:
    mean: float
    median: float
    sd: float
    count: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "median": self.median, "sd": self.sd, "count": self.count}


def summarize(values: np.ndarray) -> Summary:
    """Mean, median (midpoint rule for even counts) and sample SD of the non-NaN values."""
    v = np.asarray(values, dtype=np.float64).ravel()
    v = v[~np.isnan(v)]
    if v.size == 0:
        return Summary(math.nan, math.nan, math.nan, 0)
    mean = math.fsum(v) / v.size
    sd = math.sqrt(math.fsum((v - mean) ** 2) / (v.size - 1)) if v.size > 1 else 0.0
    return Summary(mean, float(np.median(v)), sd, int(v.size))


def _stack(ref: Sequence[ProbabilityMap], test: Sequence[ProbabilityMap]) -> tuple[np.ndarray, np.ndarray, RasterGrid]:
    ref_labels = [m.label for m in ref]
    test_labels = [m.label for m in test]
    if sorted(ref_labels) != sorted(test_labels) or len(set(ref_labels)) != len(ref_labels):
        raise ValueError(f"class sets differ: reference {ref_labels} vs test {test_labels}")
    by_label = {m.label: m for m in test}
    geom = ref[0].grid
    for m in list(ref) + list(test):
        if not m.grid.same_geometry(geom):
            raise ValueError(f"map for class {m.label!r} does not share the reference geometry")
    r = np.stack([m.values for m in ref])
    t = np.stack([by_label[label].values for label in ref_labels])
    return r, t, geom


def mse_closeness(ref: Sequence[ProbabilityMap], test: Sequence[ProbabilityMap]) -> tuple[RasterGrid, Summary]:
    r, t, geom = _stack(ref, test)
    s = np.mean((r - t) ** 2, axis=0)
    return geom.with_values(s), summarize(s)


def _normalize(p: np.ndarray, name: str) -> tuple[np.ndarray, int]:
    if np.any(p < 0):
        raise ValueError(f"{name} proportions must be non-negative")
    total = p.sum(axis=0)
    off = ~np.isnan(total) & (np.abs(total - 1.0) > 1e-9)
    safe = np.where(total > 0, total, 1.0)
    out = np.where(total > 0, p / safe, 1.0 / p.shape[0])
    return out, int(off.sum())


@dataclass(frozen=True)
class EntropyResult:
    grid: RasterGrid
    summary: Summary
    renormalized_ref: int = 0
    renormalized_test: int = 0
    clamped: int = 0


def cross_entropy(ref: Sequence[ProbabilityMap], test: Sequence[ProbabilityMap], eps: float = 1e-12) -> EntropyResult:
    """Per-pixel D = -sum f1 log2 f2 + sum f1 log2 f1.

    Both sides are renormalized to sum to 1 per pixel where needed (counted
    in the result; an all-zero pixel becomes uniform). Test proportions below
    ``eps`` are raised to ``eps`` before the log, and terms with f1 == 0
    contribute nothing.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    r, t, geom = _stack(ref, test)
    nan = np.isnan(r).any(axis=0) | np.isnan(t).any(axis=0)
    r = np.where(nan, 0.0, r)
    t = np.where(nan, 0.0, t)
    f1, n_ref = _normalize(r, "reference")
    f2, n_test = _normalize(t, "test")
    clamped = int(((f2 < eps) & (f1 > 0)).sum())
    f2 = np.maximum(f2, eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(f1 > 0, f1 * (np.log2(np.where(f1 > 0, f1, 1.0)) - np.log2(f2)), 0.0)
    d = terms.sum(axis=0)
    d = np.where(nan, np.nan, d)
    return EntropyResult(geom.with_values(d), summarize(d), n_ref, n_test, clamped)


def class_correlation(ref: ProbabilityMap | RasterGrid, test: ProbabilityMap | RasterGrid) -> tuple[float, float]:
    """Pearson r over paired non-NaN pixels, and r squared."""
    a = ref.values.ravel()
    b = test.values.ravel()
    if a.shape != b.shape:
        raise ValueError("maps must share geometry")
    ok = ~(np.isnan(a) | np.isnan(b))
    a, b = a[ok], b[ok]
    if a.size < 2:
        raise ValueError("need at least two paired pixels for a correlation")
    da, db = a - a.mean(), b - b.mean()
    saa, sbb = math.fsum(da * da), math.fsum(db * db)
    if saa == 0 or sbb == 0:
        raise ValueError("correlation undefined: one of the maps has zero variance")
    r = math.fsum(da * db) / math.sqrt(saa * sbb)
    r = max(-1.0, min(1.0, r))
    return r, r * r


def pixel_area_ha(pixel_size: float) -> float:
    return pixel_size * pixel_size / 10_000.0


def area_estimate(prob: ProbabilityMap | RasterGrid, pixel_area: float | None = None) -> tuple[float, int]:
    """Sum of proportion x pixel area (hectares); NaN pixels count as zero.

    Returns the area and the number of NaN pixels skipped.
    """
    grid = prob.grid if isinstance(prob, ProbabilityMap) else prob
    if pixel_area is None:
        pixel_area = pixel_area_ha(grid.pixel_size)
    v = grid.values.ravel()
    nan = np.isnan(v)
    return math.fsum(v[~nan]) * pixel_area, int(nan.sum())


def percent_deviation(estimate: float, reference: float) -> float:
    """100 * (estimate - reference) / reference."""
    if not reference > 0:
        raise ValueError(f"reference area must be positive, got {reference}")
    return 100.0 * (estimate - reference) / reference


@dataclass
class ClosenessReport:
    s_grid: RasterGrid
    d_grid: RasterGrid
    s: Summary
    d: Summary
    correlations: dict = field(default_factory=dict)
    pixel_count: int = 0
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "S": self.s.to_dict(),
            "D": self.d.to_dict(),
            "correlation": self.correlations,
            "pixel_count": self.pixel_count,
            "notes": self.notes,
        }


def closeness_report(ref: Sequence[ProbabilityMap], test: Sequence[ProbabilityMap], eps: float = 1e-12) -> ClosenessReport:
    s_grid, s = mse_closeness(ref, test)
    ent = cross_entropy(ref, test, eps)
    by_label = {m.label: m for m in test}
    corr = {}
    for m in ref:
        try:
            r, r2 = class_correlation(m, by_label[m.label])
            corr[m.label] = {"r": r, "r2": r2}
        except ValueError as exc:
            corr[m.label] = {"r": None, "r2": None, "error": str(exc)}
    notes = {
        "renormalized_ref_pixels": ent.renormalized_ref,
        "renormalized_test_pixels": ent.renormalized_test,
        "eps_clamped_terms": ent.clamped,
    }
    return ClosenessReport(s_grid, ent.grid, s, ent.summary, corr, s.count, notes)


@dataclass
class AreaReport:
    rows: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return self.rows


def area_report(maps: Sequence[ProbabilityMap], reference_ha: dict | None = None, pixel_area: float | None = None) -> AreaReport:
    rows = {}
    for m in maps:
        area, skipped = area_estimate(m, pixel_area)
        row = {"area_ha": area, "nan_pixels": skipped}
        if reference_ha and m.label in reference_ha:
            row["reference_ha"] = reference_ha[m.label]
            row["percent_deviation"] = percent_deviation(area, reference_ha[m.label])
        rows[m.label] = row
    return AreaReport(rows)


def align(ref: Sequence[ProbabilityMap], test: Sequence[ProbabilityMap]):
    """Bring two map sets to a common grid by integer-factor mean upscaling of the finer one."""
    r0, t0 = ref[0].grid, test[0].grid
    if r0.same_geometry(t0):
        return list(ref), list(test)
    ratio = t0.pixel_size / r0.pixel_size
    if ratio > 1:
        factor, finer = ratio, "ref"
    else:
        factor, finer = 1.0 / ratio, "test"
    k = round(factor)
    if abs(factor - k) > 1e-9 * factor or k < 2:
        raise ValueError(f"pixel sizes {r0.pixel_size} and {t0.pixel_size} are not integer multiples")

    def up(maps):
        return [ProbabilityMap(upscale_mean(m.grid, k), m.label, m.kind) for m in maps]

    ref, test = (up(ref), list(test)) if finer == "ref" else (list(ref), up(test))
    if not ref[0].grid.same_geometry(test[0].grid):
        raise ValueError("maps do not cover the same extent after upscaling")
    return ref, test
