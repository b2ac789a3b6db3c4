"""Reflectance / radiance / DN conversions and dark-object subtraction.

Radiance units are mW cm^-2 sr^-1 um^-1 throughout. DN values stay real
valued; nothing here quantizes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .raster import BandStack


@dataclass(frozen=True)
class CalibrationParams:
    """Per-band sensor gain/bias and solar geometry.

    There are no defaults: every number comes from the scene header.
    """

    gain: tuple[float, ...]
    bias: tuple[float, ...]
    esun: tuple[float, ...]
    sun_elevation: float
    earth_sun_distance: float

    def __post_init__(self):
        gain, bias, esun = (tuple(float(v) for v in x) for x in (self.gain, self.bias, self.esun))
        if not (len(gain) == len(bias) == len(esun)) or not gain:
            raise ValueError("gain, bias and esun must be non-empty and the same length")
        if any(g <= 0 for g in gain):
            raise ValueError(f"gain must be positive, got {gain}")
        if any(e <= 0 for e in esun):
            raise ValueError(f"esun must be positive, got {esun}")
        if not 0 < self.sun_elevation <= 90:
            raise ValueError(f"sun_elevation must be in (0, 90] degrees, got {self.sun_elevation}")
        if not self.earth_sun_distance > 0:
            raise ValueError(f"earth_sun_distance must be positive, got {self.earth_sun_distance}")
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "esun", esun)

    @property
    def n_bands(self) -> int:
        return len(self.gain)

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationParams":
        return cls(
            gain=tuple(d["gain"]),
            bias=tuple(d["bias"]),
            esun=tuple(d["esun"]),
            sun_elevation=float(d["sun_elevation_deg"]),
            earth_sun_distance=float(d["earth_sun_distance_au"]),
        )

    def to_dict(self) -> dict:
        return {
            "gain": list(self.gain),
            "bias": list(self.bias),
            "esun": list(self.esun),
            "sun_elevation_deg": self.sun_elevation,
            "earth_sun_distance_au": self.earth_sun_distance,
        }


def reflectance_to_radiance(r, band: int, cal: CalibrationParams):
    """At-satellite radiance from unitless reflectance.

    L = r * esun * sin(SE) / (pi * d^2), with the sun elevation SE given in
    degrees and converted to radians here.
    """
    r_arr = np.asarray(r, dtype=np.float64)
    if np.any(r_arr < 0) or np.any(r_arr > 1):
        raise ValueError("reflectance must lie in [0, 1]")
    sin_se = math.sin(math.radians(cal.sun_elevation))
    out = r_arr * cal.esun[band] * sin_se / (math.pi * cal.earth_sun_distance**2)
    return float(out) if out.ndim == 0 else out


def radiance_to_dn(radiance, band: int, cal: CalibrationParams):
    """DN = (L - bias) / gain, not rounded."""
    out = (np.asarray(radiance, dtype=np.float64) - cal.bias[band]) / cal.gain[band]
    return float(out) if out.ndim == 0 else out


def dn_to_radiance(dn, band: int, cal: CalibrationParams):
    out = np.asarray(dn, dtype=np.float64) * cal.gain[band] + cal.bias[band]
    return float(out) if out.ndim == 0 else out


def reflectance_to_dn(r, band: int, cal: CalibrationParams):
    return radiance_to_dn(reflectance_to_radiance(r, band, cal), band, cal)


def dark_object_values(stack: BandStack, percentile: float = 0.0) -> list[float]:
    """Per-band dark-object DN: the lower ``percentile`` (a fraction) of valid pixels."""
    if not 0 <= percentile <= 0.05:
        raise ValueError(f"percentile must be a fraction in [0, 0.05], got {percentile}")
    darks = []
    for i, band in enumerate(stack.bands):
        valid = band.values[~np.isnan(band.values)]
        if valid.size == 0:
            raise ValueError(f"band {i} has no valid pixels")
        darks.append(float(np.quantile(valid, percentile)))
    return darks


def dos_correct(stack: BandStack, percentile: float = 0.0, darks: Sequence[float] | None = None) -> BandStack:
    """Subtract each band's dark-object DN and clamp at zero. NaN stays NaN."""
    if darks is None:
        darks = dark_object_values(stack, percentile)
    bands = []
    for band, dark in zip(stack.bands, darks):
        with np.errstate(invalid="ignore"):
            corrected = np.where(np.isnan(band.values), np.nan, np.maximum(band.values - dark, 0.0))
        bands.append(band.with_values(corrected))
    return BandStack(tuple(bands), stack.band_windows)
