"""Synthetic mixed-pixel scenes with known sub-pixel class proportions.

A fine-resolution label map is drawn by smoothing white noise and cutting
it at quantiles, fine DNs are class means plus Gaussian scatter, and the
coarse image is the block mean of the fine one (plus optional sensor
noise). Coarse class proportions come from the same block means of the
one-hot labels, so they are exact.

Randomness: numpy's PCG64 bit generator, seeded through
``SeedSequence([seed, stream])`` with a fixed stream per purpose
(0 latent field, 1 fine DN scatter, 2 coarse sensor noise, 3 signature
samples). Normal deviates come from the Box-Muller transform of PCG64
uniform doubles, so they do not depend on numpy's own normal sampler.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .kbsc import ProbabilityMap
from .raster import BandStack, RasterGrid, upscale_mean

STREAM_LATENT, STREAM_FINE, STREAM_COARSE, STREAM_GHS = 0, 1, 2, 3


@dataclass(frozen=True)
class ClassSpec:
    label: str
    band_means: tuple[float, ...]
    band_sds: tuple[float, ...]
    target_fraction: float

    def __post_init__(self):
        object.__setattr__(self, "band_means", tuple(float(v) for v in self.band_means))
        object.__setattr__(self, "band_sds", tuple(float(v) for v in self.band_sds))
        if len(self.band_means) != len(self.band_sds):
            raise ValueError(f"class {self.label!r}: band_means and band_sds differ in length")
        if any(s < 0 for s in self.band_sds):
            raise ValueError(f"class {self.label!r}: band_sds must be non-negative")
        if not 0 <= self.target_fraction <= 1:
            raise ValueError(f"class {self.label!r}: target_fraction must be in [0, 1], got {self.target_fraction}")


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 42
    fine_rows: int = 512
    fine_cols: int = 512
    fine_pixel_size: float = 23.5
    coarsen_factor: int = 8
    classes: tuple[ClassSpec, ...] = ()
    autocorr_range: float = 1128.0
    noise_sd: float = 0.0
    band_windows: tuple[tuple[float, float], ...] = ((620.0, 680.0), (770.0, 860.0))
    labels: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        classes = tuple(c if isinstance(c, ClassSpec) else ClassSpec(**c) for c in self.classes)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "band_windows", tuple(tuple(float(v) for v in w) for w in self.band_windows))
        if not classes:
            raise ValueError("classes: at least one class is required")
        n_bands = len(classes[0].band_means)
        if any(len(c.band_means) != n_bands for c in classes):
            raise ValueError("classes: every class needs the same number of bands")
        if len(self.band_windows) != n_bands:
            raise ValueError(f"band_windows: {len(self.band_windows)} windows for {n_bands} bands")
        total = math.fsum(c.target_fraction for c in classes)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"target_fraction: class fractions must sum to 1, got {total}")
        if int(self.coarsen_factor) != self.coarsen_factor or self.coarsen_factor < 2:
            raise ValueError(f"coarsen_factor must be an integer >= 2, got {self.coarsen_factor}")
        if self.fine_rows % self.coarsen_factor or self.fine_cols % self.coarsen_factor:
            raise ValueError("fine_rows and fine_cols must be divisible by coarsen_factor")
        if not self.autocorr_range > 0:
            raise ValueError(f"autocorr_range must be positive, got {self.autocorr_range}")
        if not self.fine_pixel_size > 0:
            raise ValueError(f"fine_pixel_size must be positive, got {self.fine_pixel_size}")
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be non-negative, got {self.noise_sd}")
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (self.fine_rows, self.fine_cols):
                raise ValueError(f"labels: expected shape {(self.fine_rows, self.fine_cols)}, got {lab.shape}")
            if lab.min() < 0 or lab.max() >= len(classes):
                raise ValueError("labels: class indices out of range")

    @property
    def n_bands(self) -> int:
        return len(self.classes[0].band_means)

    @property
    def class_labels(self) -> list[str]:
        return [c.label for c in self.classes]

    @property
    def coarse_pixel_size(self) -> float:
        return self.fine_pixel_size * self.coarsen_factor

    def with_seed(self, seed: int) -> "SceneSpec":
        d = self.to_dict()
        d["seed"] = seed
        return SceneSpec.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("labels")
        d["classes"] = [asdict(c) for c in self.classes]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["classes"] = tuple(ClassSpec(**c) for c in d["classes"])
        if "band_windows" in d:
            d["band_windows"] = tuple(tuple(w) for w in d["band_windows"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SceneSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream)])))


def box_muller(gen: np.random.Generator, size) -> np.ndarray:
    """Standard normal deviates from pairs of uniforms (u1 in (0, 1], u2 in [0, 1))."""
    n = int(np.prod(size))
    m = (n + 1) // 2
    u1 = 1.0 - gen.random(m)
    u2 = gen.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
    return z[:n].reshape(size)


def latent_field(spec: SceneSpec) -> np.ndarray:
    """Smoothed white noise on the fine grid (periodic boundaries).

    The Gaussian kernel's sigma is range / sqrt(12) pixels, which gives the
    field a Gaussian covariance whose practical range is ``autocorr_range``.
    """
    noise = box_muller(rng(spec.seed, STREAM_LATENT), (spec.fine_rows, spec.fine_cols))
    sigma = spec.autocorr_range / spec.fine_pixel_size / math.sqrt(12.0)
    if sigma < 0.05:
        return noise
    return gaussian_filter(noise, sigma, mode="wrap", truncate=4.0)


def quantile_labels(field_values: np.ndarray, fractions: Sequence[float]) -> np.ndarray:
    """Cut the field by rank so class k gets round(cumulative fraction * N) pixels."""
    flat = field_values.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.round(np.cumsum(fractions) * flat.size).astype(int)
    bounds[-1] = flat.size
    labels = np.empty(flat.size, dtype=np.int64)
    start = 0
    for k, stop in enumerate(bounds):
        labels[order[start:stop]] = k
        start = stop
    return labels.reshape(field_values.shape)


@dataclass(frozen=True)
class Scene:
    spec: SceneSpec
    fine_labels: RasterGrid
    fine_dn: BandStack
    coarse_dn: BandStack
    coarse_proportions: list[ProbabilityMap]

    def proportions_at(self, factor: int) -> list[ProbabilityMap]:
        """True class proportions on a grid ``factor`` times the fine pixel size."""
        out = []
        for k, label in enumerate(self.spec.class_labels):
            onehot = self.fine_labels.with_values((self.fine_labels.values == k).astype(np.float64))
            grid = onehot if factor == 1 else upscale_mean(onehot, factor)
            out.append(ProbabilityMap(grid, label, "proportion"))
        return out


def generate_scene(spec: SceneSpec) -> Scene:
    if spec.labels is not None:
        labels = np.asarray(spec.labels, dtype=np.int64)
    else:
        labels = quantile_labels(latent_field(spec), [c.target_fraction for c in spec.classes])
    fine_labels = RasterGrid(labels.astype(np.float64), spec.fine_pixel_size)

    means = np.array([c.band_means for c in spec.classes])  # (classes, bands)
    sds = np.array([c.band_sds for c in spec.classes])
    scatter = box_muller(rng(spec.seed, STREAM_FINE), (spec.n_bands, spec.fine_rows, spec.fine_cols))
    fine = means.T[:, labels] + sds.T[:, labels] * scatter
    fine_dn = BandStack.from_array(fine, spec.fine_pixel_size, band_windows=spec.band_windows)

    f = spec.coarsen_factor
    coarse = np.stack([upscale_mean(b, f).values for b in fine_dn.bands])
    if spec.noise_sd > 0:
        coarse = coarse + spec.noise_sd * box_muller(rng(spec.seed, STREAM_COARSE), coarse.shape)
    coarse_dn = BandStack.from_array(coarse, spec.coarse_pixel_size, band_windows=spec.band_windows)

    scene = Scene(spec, fine_labels, fine_dn, coarse_dn, [])
    object.__setattr__(scene, "coarse_proportions", scene.proportions_at(f))
    return scene


def ghs_from_spec(spec: SceneSpec, samples_per_class: int) -> dict[str, np.ndarray]:
    """Simulated field-signature DN samples, shape (samples_per_class, bands) per class."""
    if samples_per_class < 2:
        raise ValueError(f"samples_per_class must be >= 2, got {samples_per_class}")
    gen = rng(spec.seed, STREAM_GHS)
    out = {}
    for c in spec.classes:
        z = box_muller(gen, (samples_per_class, spec.n_bands))
        out[c.label] = np.asarray(c.band_means) + np.asarray(c.band_sds) * z
    return out


def crop_scene_spec(
    seed: int = 42,
    autocorr_range: float = 1128.0,
    band_sd: float = 25.0,
    separation: float = 20.0,
    noise_sd: float = 0.0,
) -> SceneSpec:
    """Two-crop scene on a 512 x 512 grid of 23.5 m pixels, coarsened 8x to 188 m.

    Wheat is darker in red and brighter in NIR than mustard by ``separation``
    DN per band; with the default scatter the two classes overlap heavily at
    the fine scale and are separable only after block averaging.
    """
    return SceneSpec(
        seed=seed,
        fine_rows=512,
        fine_cols=512,
        fine_pixel_size=23.5,
        coarsen_factor=8,
        autocorr_range=autocorr_range,
        noise_sd=noise_sd,
        classes=(
            ClassSpec("wheat", (40.0, 110.0), (band_sd, band_sd), 0.6),
            ClassSpec("mustard", (40.0 + separation, 110.0 - separation), (band_sd, band_sd), 0.4),
        ),
    )
