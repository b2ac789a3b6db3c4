"""Glue between the run configuration and the library modules.

Everything here is deterministic for a fixed config: scenes, signature
samples and kriging neighborhoods depend only on the seed and settings.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assess import align, closeness_report
from .baselines import (
    belclass,
    bayclass,
    fuzzyclass,
    maxlike,
    normalized_beliefs,
    one_hot,
    pure_training_masks,
    train_fuzzy,
    train_gaussian,
)
from .config import RunConfig
from .kbsc import KbscSettings, ProbabilityMap, classify_kbsc, harden, membership_proportions
from .kriging import KrigingConfig
from .raster import BandStack, RasterGrid
from .signatures import SignatureStats, compute_thresholds, read_manifest, spectra_band_dn
from .synth import Scene, SceneSpec, generate_scene, ghs_from_spec

SCHEMA_VERSION = 1
CSV_COLUMNS = (
    "schema_version",
    "seed",
    "method",
    "h",
    "pixels",
    "s_mean",
    "s_median",
    "s_sd",
    "d_mean",
    "d_median",
    "d_sd",
    "d_clamped",
    "r_mean",
    "r2_mean",
    "correlations",
    "error",
)


def window_sample_counts(windows: Sequence[tuple[float, float]], spacing_nm: float) -> tuple[int, ...]:
    """Field samples inside each window for a spectrometer sampling every ``spacing_nm``."""
    return tuple(int(math.floor((hi - lo) / spacing_nm + 1e-9)) + 1 for lo, hi in windows)


def kbsc_settings(cfg: RunConfig) -> KbscSettings:
    k = cfg.kriging
    return KbscSettings(
        family=cfg.variogram.family,
        max_lag=cfg.variogram.max_lag,
        n_bins=cfg.variogram.n_bins,
        combine=cfg.combine,
        kriging=KrigingConfig(max_neighbors=k.max_neighbors, search_radius=k.search_radius, clamp=k.clamp),
    )


def scene_thresholds(cfg: RunConfig, spec: SceneSpec) -> SignatureStats:
    """Thresholds from simulated field signatures of a synthetic scene."""
    counts = cfg.band_counts
    if cfg.df_mode == "bands" and counts is None:
        counts = window_sample_counts(spec.band_windows, cfg.ghs_spacing_nm)
    return compute_thresholds(ghs_from_spec(spec, cfg.ghs_samples), cfg.alpha, cfg.df_mode, counts)


def manifest_thresholds(cfg: RunConfig, stack: BandStack) -> SignatureStats:
    """Thresholds from field spectra listed in the manifest, calibrated to DN."""
    samples, counts = spectra_band_dn(read_manifest(cfg.spectra_manifest), stack.band_windows, cfg.calibration)
    if cfg.band_counts is not None:
        counts = cfg.band_counts
    return compute_thresholds(samples, cfg.alpha, cfg.df_mode, counts if cfg.df_mode == "bands" else None)


@dataclass
class Classification:
    """Per-class maps on a common grid, plus the method's report."""

    method: str
    maps: list[ProbabilityMap]
    report: dict = field(default_factory=dict)
    labels: RasterGrid | None = None
    errors: dict = field(default_factory=dict)

    def proportions(self) -> list[ProbabilityMap]:
        if self.method == "kbsc":
            return membership_proportions(self.maps)
        return self.maps


def classify(
    stack: BandStack,
    stats: SignatureStats,
    cfg: RunConfig,
    method: str,
    h: float | None = None,
    bands: Sequence[int] | None = None,
) -> Classification:
    """Run one classifier. Baselines train on pixels inside every band interval."""
    classes = list(cfg.classes) if cfg.classes is not None else stats.labels
    if bands is not None:
        stack = stack.select(bands)
        stats = SignatureStats(stats.alpha, {k: tuple(v[b] for b in bands) for k, v in stats.classes.items()})
    if method == "kbsc":
        res = classify_kbsc(stack, stats, classes, h, kbsc_settings(cfg))
        labels = harden(res.maps, cfg.harden_threshold) if res.maps else None
        return Classification(method, res.maps, res.report(), labels, res.errors)
    native = stack.geometry.pixel_size
    if h is not None and not math.isclose(h, native, rel_tol=1e-9):
        raise ValueError(f"{method} works at the image pixel size ({native} m) only, got h = {h}")
    masks = pure_training_masks(stack, stats, classes, cfg.min_training_pixels)
    if method == "fuzzyclass":
        sigs = train_fuzzy(stack, masks)
        return Classification(method, fuzzyclass(stack, sigs), {"signatures": [s.to_dict() for s in sigs]})
    sigs = train_gaussian(stack, masks)
    report = {"signatures": [s.to_dict() for s in sigs], "training_pixels": {k: int(m.sum()) for k, m in masks.items()}}
    if method == "maxlike":
        lab = maxlike(stack, sigs)
        return Classification(method, one_hot(lab, classes), report, lab)
    if method == "bayclass":
        return Classification(method, bayclass(stack, sigs), report)
    if method == "belclass":
        return Classification(method, normalized_beliefs(belclass(stack, sigs)), report)
    raise ValueError(f"unknown method {method!r}")


def fmt_value(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else format(x, ".12g")
    return str(x)


def score(truth: Sequence[ProbabilityMap], props: Sequence[ProbabilityMap], eps: float) -> dict:
    """Closeness of proportion maps to the truth, after aligning grids."""
    ref, test = align(truth, props)
    rep = closeness_report(ref, test, eps)
    nan = float("nan")
    rs = [(lab, c["r"] if c["r"] is not None else nan, c["r2"] if c["r2"] is not None else nan) for lab, c in rep.correlations.items()]
    return {
        "pixels": rep.pixel_count,
        "s_mean": rep.s.mean,
        "s_median": rep.s.median,
        "s_sd": rep.s.sd,
        "d_mean": rep.d.mean,
        "d_median": rep.d.median,
        "d_sd": rep.d.sd,
        "d_clamped": rep.notes["eps_clamped_terms"],
        "r_mean": float(np.mean([r for _, r, _ in rs])),
        "r2_mean": float(np.mean([r2 for _, _, r2 in rs])),
        "correlations": ";".join(f"{lab}={fmt_value(float(r))}" for lab, r, _ in rs),
    }


def _empty_row(seed: int, method: str, h: float, error: str) -> dict:
    row = {c: "" for c in CSV_COLUMNS}
    row.update(schema_version=SCHEMA_VERSION, seed=seed, method=method, h=h, error=error)
    return row


def seed_rows(cfg: RunConfig, seed: int, methods: Sequence[str], h_list: Sequence[float]):
    """Benchmark rows for one seed in (method, h) order, plus runtimes and maps.

    The scene and signatures are built once per seed. Failures become rows
    with the error column filled in.
    """
    spec = cfg.scene.with_seed(seed)
    scene: Scene = generate_scene(spec)
    stats = scene_thresholds(cfg, spec)
    rows, runtimes, maps = [], [], {}
    for method in methods:
        for h in h_list:
            t0 = time.perf_counter()
            try:
                out = classify(scene.coarse_dn, stats, cfg, method, h)
                if out.errors:
                    raise RuntimeError("; ".join(f"{k}: {v}" for k, v in out.errors.items()))
                row = _empty_row(seed, method, h, "")
                row.update(score(scene.coarse_proportions, out.proportions(), cfg.assess.eps))
                maps[(method, h)] = out.proportions()
            except Exception as exc:  # recorded in the row; the run continues
                row = _empty_row(seed, method, h, f"{type(exc).__name__}: {exc}")
            rows.append(row)
            runtimes.append({"seed": seed, "method": method, "h": h, "seconds": time.perf_counter() - t0})
    return rows, runtimes, maps


def _seed_job(args):
    cfg, seed, methods, h_list = args
    return seed_rows(cfg, seed, methods, h_list)


def run_benchmark(cfg: RunConfig, seeds: Sequence[int], methods: Sequence[str], h_list: Sequence[float], jobs: int = 1):
    """All seeds, in the given seed order regardless of ``jobs``."""
    tasks = [(cfg, s, tuple(methods), tuple(h_list)) for s in seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_seed_job, tasks))
    else:
        results = [_seed_job(t) for t in tasks]
    return results


def format_row(row: dict) -> list[str]:
    return [fmt_value(row[c]) for c in CSV_COLUMNS]
