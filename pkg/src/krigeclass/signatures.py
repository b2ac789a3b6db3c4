"""Ground hyperspectral signatures and the per-band DN thresholds derived from them.

Each field spectrum is reduced to sensor bands (mean reflectance inside the
band window), converted to DN through the calibration, and the per-class
DN samples give a symmetric Student-t interval ``mean +/- t * sd / sqrt(n)``
whose ends are the upper and lower thresholds used by the indicator transform.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import betainc

from .radiometry import CalibrationParams, reflectance_to_dn

DF_MODES = ("bands", "samples")


@dataclass(frozen=True)
class Spectrum:
    wavelengths_nm: np.ndarray
    reflectance: np.ndarray
    label: str = ""

    def __post_init__(self):
        wl = np.asarray(self.wavelengths_nm, dtype=np.float64)
        refl = np.asarray(self.reflectance, dtype=np.float64)
        if wl.ndim != 1 or wl.shape != refl.shape or wl.size == 0:
            raise ValueError("wavelengths and reflectance must be equal-length, non-empty 1-D arrays")
        if np.any(np.diff(wl) <= 0):
            raise ValueError("wavelengths must be strictly ascending")
        if np.any(refl < 0) or np.any(refl > 1):
            raise ValueError("reflectance must lie in [0, 1]")
        object.__setattr__(self, "wavelengths_nm", wl)
        object.__setattr__(self, "reflectance", refl)

    def window_mask(self, window: tuple[float, float]) -> np.ndarray:
        lo, hi = window
        return (self.wavelengths_nm >= lo) & (self.wavelengths_nm <= hi)


def average_spectra(spectra: Sequence[Spectrum], label: str) -> Spectrum:
    """Pointwise mean of every spectrum carrying ``label``."""
    members = [s for s in spectra if s.label == label]
    if not members:
        raise ValueError(f"no spectra for class {label!r}")
    grid = members[0].wavelengths_nm
    for s in members[1:]:
        if s.wavelengths_nm.shape != grid.shape or not np.array_equal(s.wavelengths_nm, grid):
            raise ValueError(f"spectra of class {label!r} are on different wavelength grids")
    mean = np.mean([s.reflectance for s in members], axis=0)
    return Spectrum(grid, mean, label)


def band_integrate(spec: Spectrum, window: tuple[float, float]) -> float:
    """Mean reflectance of the samples with low <= wavelength <= high."""
    lo, hi = window
    if not lo < hi:
        raise ValueError(f"empty band window ({lo}, {hi})")
    if lo < spec.wavelengths_nm[0] or hi > spec.wavelengths_nm[-1]:
        raise ValueError(
            f"window ({lo}, {hi}) nm is outside spectrum coverage "
            f"({spec.wavelengths_nm[0]}, {spec.wavelengths_nm[-1]}) nm"
        )
    mask = spec.window_mask(window)
    if not mask.any():
        raise ValueError(f"no spectral samples inside window ({lo}, {hi}) nm")
    return float(np.mean(spec.reflectance[mask]))


def _t_cdf_upper(t: float, df: float) -> float:
    # P(T > t) for t >= 0 via the regularized incomplete beta function
    return 0.5 * betainc(df / 2.0, 0.5, df / (df + t * t))


def t_quantile(alpha: float, df: float) -> float:
    """Two-sided Student-t critical value: P(|T_df| <= t) = 1 - alpha.

    Solved by Brent root finding on the tail probability written through the
    regularized incomplete beta function; absolute accuracy well below 1e-6.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if not df >= 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    target = alpha / 2.0
    hi = 1.0
    while _t_cdf_upper(hi, df) > target:
        hi *= 2.0
    return brentq(lambda t: _t_cdf_upper(t, df) - target, 0.0, hi, xtol=1e-12, rtol=1e-14, maxiter=500)


@dataclass(frozen=True)
class BandThreshold:
    mean: float
    sd: float
    df: int
    t: float
    upper: float
    lower: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "sd": self.sd,
            "df": self.df,
            "t": self.t,
            "upper": self.upper,
            "lower": self.lower,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class SignatureStats:
    """Thresholds per class and sensor band: ``stats[label][band]``."""

    alpha: float
    classes: dict[str, tuple[BandThreshold, ...]] = field(default_factory=dict)

    def __getitem__(self, label: str) -> tuple[BandThreshold, ...]:
        return self.classes[label]

    def __contains__(self, label) -> bool:
        return label in self.classes

    @property
    def labels(self) -> list[str]:
        return list(self.classes)

    def threshold(self, label: str, band: int) -> BandThreshold:
        try:
            return self.classes[label][band]
        except (KeyError, IndexError):
            raise ValueError(f"no thresholds for class {label!r}, band {band}") from None

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "classes": {
                label: {str(i): th.to_dict() for i, th in enumerate(bands)} for label, bands in self.classes.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SignatureStats":
        classes = {}
        for label, bands in d["classes"].items():
            ordered = sorted(bands.items(), key=lambda kv: int(kv[0]))
            classes[label] = tuple(BandThreshold(**v) for _, v in ordered)
        return cls(alpha=float(d["alpha"]), classes=classes)

    def save(self, path) -> None:
        # key order is kept: class order fixes the label indices of hard maps
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "SignatureStats":
        return cls.from_dict(json.loads(Path(path).read_text()))


def compute_thresholds(
    samples: Mapping[str, np.ndarray],
    alpha: float = 0.05,
    df_mode: str = "bands",
    band_counts: Mapping[str, Sequence[int]] | Sequence[int] | None = None,
) -> SignatureStats:
    """Student-t interval thresholds from per-sample band DNs.

    ``samples[label]`` has shape (n_samples, n_bands). ``df_mode="bands"``
    takes n as the number of hyperspectral samples inside each sensor band
    window (``band_counts``, per band or per class and band);
    ``df_mode="samples"`` takes n = n_samples - 1. The same n is used for the
    t degrees of freedom and the ``sqrt(n)`` divisor.

    A class with a single sample has no spread: its interval collapses to the
    sample value and the threshold is flagged ``degenerate``.
    """
    if df_mode not in DF_MODES:
        raise ValueError(f"df_mode must be one of {DF_MODES}, got {df_mode!r}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    out = {}
    for label, arr in samples.items():
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        n_samples, n_bands = arr.shape
        if n_samples == 0:
            raise ValueError(f"class {label!r} has no signature samples")
        if df_mode == "bands":
            if band_counts is None:
                raise ValueError("df_mode='bands' needs band_counts")
            counts = band_counts[label] if isinstance(band_counts, Mapping) else band_counts
            if len(counts) != n_bands:
                raise ValueError(f"class {label!r}: {len(counts)} band counts for {n_bands} bands")
        bands = []
        for b in range(n_bands):
            mean = math.fsum(arr[:, b]) / n_samples
            if n_samples == 1:
                warnings.warn(f"class {label!r} has one signature sample; interval collapses to the mean")
                bands.append(BandThreshold(mean, 0.0, 0, 0.0, mean, mean, degenerate=True))
                continue
            sd = float(np.std(arr[:, b], ddof=1))
            n = int(counts[b]) if df_mode == "bands" else n_samples - 1
            if n < 1:
                raise ValueError(f"class {label!r} band {b}: degrees of freedom must be >= 1, got {n}")
            t = t_quantile(alpha, n)
            half = t * sd / math.sqrt(n)
            bands.append(BandThreshold(mean, sd, n, t, mean + half, mean - half))
        out[label] = tuple(bands)
    return SignatureStats(alpha=alpha, classes=out)


def spectra_band_dn(
    spectra: Sequence[Spectrum],
    windows: Sequence[tuple[float, float]],
    cal: CalibrationParams,
) -> tuple[dict[str, np.ndarray], dict[str, list[int]]]:
    """Per-class DN samples, one row per field spectrum, plus per-band sample counts.

    Each spectrum is band-integrated and calibrated on its own so the spread
    is measured in DN space.
    """
    if cal.n_bands < len(windows):
        raise ValueError(f"calibration covers {cal.n_bands} bands, {len(windows)} windows requested")
    rows: dict[str, list[list[float]]] = {}
    counts: dict[str, list[int]] = {}
    for spec in spectra:
        dn = [reflectance_to_dn(band_integrate(spec, w), i, cal) for i, w in enumerate(windows)]
        rows.setdefault(spec.label, []).append(dn)
        c = [int(spec.window_mask(w).sum()) for w in windows]
        if counts.setdefault(spec.label, c) != c:
            raise ValueError(f"class {spec.label!r} spectra have different sample counts per window")
    return {k: np.array(v) for k, v in rows.items()}, counts


def read_spectrum_csv(path, label: str = "") -> Spectrum:
    """Two columns ``wavelength_nm,reflectance``; a non-numeric first row is a header."""
    wl, refl = [], []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                w, r = float(row[0]), float(row[1])
            except ValueError:
                if i == 0:
                    continue
                raise ValueError(f"{path}: bad row {i + 1}: {row}") from None
            wl.append(w)
            refl.append(r)
    return Spectrum(np.array(wl), np.array(refl), label)


def read_manifest(path) -> list[Spectrum]:
    """Manifest CSV ``file,class``; file paths are relative to the manifest."""
    base = Path(path).parent
    spectra = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or (i == 0 and row[0].strip().lower() == "file"):
                continue
            spectra.append(read_spectrum_csv(base / row[0].strip(), row[1].strip()))
    if not spectra:
        raise ValueError(f"manifest {path} lists no spectra")
    return spectra
