"""Kriging-based soft classification.

For every class and band the DN band is turned into two indicator maps
(upper: DN <= U, lower: DN >= L), each indicator map gets its own fitted
variogram and is kriged onto the output grid, the two kriged maps are
combined into a per-band membership, and the per-band memberships are
multiplied into the class's joint membership map.

Two combination rules are available for the per-band step:

``eq5``
    p_upper + p_lower - p_upper * p_lower (the default).
``product``
    p_upper * p_lower, the probability that DN lies inside [L, U] when the
    two events are treated as independent.

Note that with binary inputs ``eq5`` is 1 everywhere, because every DN is
either <= U or >= L. It only departs from 1 where kriging smooths the
indicators.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kriging import KrigingConfig, predict_grid
from .raster import BandStack, RasterGrid
from .signatures import SignatureStats
from .variogram import VariogramModel, empirical_variogram, fit_model

log = logging.getLogger(__name__)

COMBINE_RULES = ("eq5", "product")
UNCLASSIFIED = -1


@dataclass(frozen=True)
class IndicatorPair:
    upper: RasterGrid
    lower: RasterGrid
    label: str
    band: int


@dataclass(frozen=True)
class ProbabilityMap:
    grid: RasterGrid
    label: str
    kind: str = "joint"

    @property
    def values(self) -> np.ndarray:
        return self.grid.values


def indicator_maps(band: RasterGrid, stats: SignatureStats, label: str, band_index: int) -> IndicatorPair:
    """upper = 1 where DN <= U, lower = 1 where DN >= L (both inclusive); NaN stays NaN."""
    th = stats.threshold(label, band_index)
    dn = band.values
    nan = np.isnan(dn)
    with np.errstate(invalid="ignore"):
        upper = np.where(nan, np.nan, (dn <= th.upper).astype(np.float64))
        lower = np.where(nan, np.nan, (dn >= th.lower).astype(np.float64))
    return IndicatorPair(band.with_values(upper), band.with_values(lower), label, band_index)


def band_probability(upper_k: RasterGrid, lower_k: RasterGrid, combine: str = "eq5", label: str = "", band: int = 0) -> ProbabilityMap:
    if not upper_k.same_geometry(lower_k):
        raise ValueError("upper and lower maps must share geometry")
    p1, p2 = upper_k.values, lower_k.values
    if combine == "eq5":
        p = p1 + p2 - p1 * p2
    elif combine == "product":
        p = p1 * p2
    else:
        raise ValueError(f"combine must be one of {COMBINE_RULES}, got {combine!r}")
    return ProbabilityMap(upper_k.with_values(p), label, f"band:{band}")


def joint_probability(band_maps: Sequence[ProbabilityMap]) -> ProbabilityMap:
    """Pointwise product of per-band maps (bands treated as independent)."""
    if not band_maps:
        raise ValueError("joint probability needs at least one band map")
    first = band_maps[0].grid
    joint = np.ones(first.shape)
    for m in band_maps:
        if not m.grid.same_geometry(first):
            raise ValueError("band maps must share geometry")
        joint = joint * m.grid.values
    return ProbabilityMap(first.with_values(joint), band_maps[0].label, "joint")


@dataclass(frozen=True)
class KbscSettings:
    family: str = "spherical"
    max_lag: float | None = None
    n_bins: int = 15
    combine: str = "eq5"
    kriging: KrigingConfig = KrigingConfig()

    def __post_init__(self):
        if self.combine not in COMBINE_RULES:
            raise ValueError(f"combine must be one of {COMBINE_RULES}, got {self.combine!r}")


@dataclass
class KbscResult:
    maps: list[ProbabilityMap]
    fits: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    @property
    def labels(self) -> list[str]:
        return [m.label for m in self.maps]

    def report(self) -> dict:
        return {"variograms": self.fits, "kriging": self.diagnostics, "errors": self.errors}


def krige_indicator(indicator: RasterGrid, out_pixel_size: float, settings: KbscSettings):
    """Fit a variogram to one indicator map and krige it; returns (grid, fit info, diagnostics)."""
    vals = indicator.values[~np.isnan(indicator.values)]
    p = float(vals.mean()) if vals.size else float("nan")
    if vals.size and np.all(vals == vals[0]):
        # constant map: no spatial structure to fit; kriging returns the constant
        model = VariogramModel(settings.family, 0.0, 0.0, indicator.pixel_size)
        fit_info = {**model.to_dict(), "residual": 0.0, "range_identified": False, "constant": True}
    else:
        emp = empirical_variogram(indicator, settings.max_lag, settings.n_bins)
        fit = fit_model(emp, settings.family, sill_seed=p * (1.0 - p))
        model = fit.model
        fit_info = {**fit.to_dict(), "constant": False}
    fit_info["indicator_mean"] = p
    grid, diag = predict_grid(indicator, model, out_pixel_size, settings.kriging)
    return grid, fit_info, diag.to_dict()


def classify_kbsc(
    stack: BandStack,
    stats: SignatureStats,
    classes: Sequence[str] | None = None,
    out_pixel_size: float | None = None,
    settings: KbscSettings = KbscSettings(),
    bands: Sequence[int] | None = None,
) -> KbscResult:
    """Joint membership map per class at ``out_pixel_size`` (default: input pixel size).

    A class whose processing fails is left out of ``maps`` and its error is
    recorded in ``errors``; the other classes are still produced.
    """
    classes = list(classes if classes is not None else stats.labels)
    bands = list(bands if bands is not None else range(stack.n_bands))
    out_pixel_size = out_pixel_size or stack.geometry.pixel_size
    result = KbscResult(maps=[])
    for label in classes:
        try:
            band_maps = []
            fits, diags = {}, {}
            for b in bands:
                pair = indicator_maps(stack.bands[b], stats, label, b)
                kriged = {}
                for limit, grid in (("upper", pair.upper), ("lower", pair.lower)):
                    kriged[limit], fits[f"band{b}_{limit}"], diags[f"band{b}_{limit}"] = krige_indicator(
                        grid, out_pixel_size, settings
                    )
                band_maps.append(band_probability(kriged["upper"], kriged["lower"], settings.combine, label, b))
            result.maps.append(joint_probability(band_maps))
            result.fits[label] = fits
            result.diagnostics[label] = diags
        except Exception as exc:  # isolate per-class failures
            log.error("class %s failed: %s", label, exc)
            result.errors[label] = f"{type(exc).__name__}: {exc}"
    return result


def harden(maps: Sequence[ProbabilityMap], min_probability: float = 0.0) -> RasterGrid:
    """Class index of the most probable class per pixel, or -1 (unclassified).

    A pixel is labelled only if its best probability is >= ``min_probability``.
    Ties go to the class listed first. NaN probabilities never win.
    """
    if not maps:
        raise ValueError("harden needs at least one map")
    if not 0 <= min_probability <= 1:
        raise ValueError(f"min_probability must be in [0, 1], got {min_probability}")
    first = maps[0].grid
    for m in maps[1:]:
        if not m.grid.same_geometry(first):
            raise ValueError("maps must share geometry")
    probs = np.stack([np.nan_to_num(m.values, nan=-np.inf) for m in maps])
    best = np.argmax(probs, axis=0)  # first maximum wins ties
    top = np.take_along_axis(probs, best[None], axis=0)[0]
    labels = np.where(top >= min_probability, best, UNCLASSIFIED)
    return first.with_values(labels.astype(np.float64))


def membership_proportions(maps: Sequence[ProbabilityMap]) -> list[ProbabilityMap]:
    """Rescale joint maps so each pixel's memberships sum to 1.

    Pixels where every class has zero membership get equal shares.
    Only used to compare against proportion maps; the classifier output
    itself is never normalized.
    """
    stacked = np.stack([m.values for m in maps])
    total = stacked.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        props = np.where(total > 0, stacked / np.where(total > 0, total, 1.0), 1.0 / len(maps))
    props = np.where(np.isnan(total), np.nan, props)
    return [ProbabilityMap(m.grid.with_values(p), m.label, "proportion") for m, p in zip(maps, props)]
