"""JSON run configuration shared by the command-line subcommands.

Relative paths are resolved against the directory holding the config file.
Unknown keys are rejected so that typos surface as errors instead of
silently falling back to defaults.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .kbsc import COMBINE_RULES
from .radiometry import CalibrationParams
from .synth import SceneSpec, crop_scene_spec
from .variogram import FAMILIES

METHODS = ("kbsc", "maxlike", "bayclass", "belclass", "fuzzyclass")


class ConfigError(ValueError):
    """The configuration is malformed or refers to missing inputs."""


@dataclass(frozen=True)
class VariogramSettings:
    family: str = "spherical"
    max_lag: float | None = None
    n_bins: int = 15


@dataclass(frozen=True)
class KrigingSettings:
    out_pixel_size: float | None = None
    max_neighbors: int | None = 16
    search_radius: float | None = None
    clamp: bool = True


@dataclass(frozen=True)
class AssessSettings:
    eps: float = 1e-12
    pixel_area: float | None = None


@dataclass(frozen=True)
class BenchmarkSettings:
    seeds: tuple[int, ...] = (0,)
    methods: tuple[str, ...] = ("kbsc", "maxlike")
    h_list: tuple[float, ...] = (188.0,)
    save_maps: bool = True


@dataclass(frozen=True)
class RunConfig:
    out_dir: Path = Path("out")
    image: Path | None = None
    signatures: Path | None = None
    spectra_manifest: Path | None = None
    calibration: CalibrationParams | None = None
    alpha: float = 0.05
    df_mode: str = "bands"
    band_counts: tuple[int, ...] | None = None
    ghs_spacing_nm: float = 5.0
    variogram: VariogramSettings = VariogramSettings()
    kriging: KrigingSettings = KrigingSettings()
    combine: str = "product"
    classes: tuple[str, ...] | None = None
    harden_threshold: float = 0.0
    min_training_pixels: int = 20
    assess: AssessSettings = AssessSettings()
    scene: SceneSpec = field(default_factory=crop_scene_spec)
    ghs_samples: int = 70
    benchmark: BenchmarkSettings = BenchmarkSettings()

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Path):
                v = str(v)
            elif isinstance(v, (CalibrationParams, SceneSpec)):
                v = v.to_dict()
            elif hasattr(v, "__dataclass_fields__"):
                v = asdict(v)
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d


_SECTIONS = {
    "variogram": VariogramSettings,
    "kriging": KrigingSettings,
    "assess": AssessSettings,
    "benchmark": BenchmarkSettings,
}
_PATHS = ("out_dir", "image", "signatures", "spectra_manifest")


def _section(cls, name: str, raw) -> object:
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected an object")
    known = {f.name for f in fields(cls)}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"{name}: unknown keys {sorted(extra)}")
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
    return cls(**values)


def config_from_dict(raw: dict, base_dir: Path | None = None) -> RunConfig:
    """Build and validate a RunConfig; relative paths resolve against ``base_dir``."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown config keys {sorted(extra)}")
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    kw = {"out_dir": base_dir / "out"}
    for key, value in raw.items():
        if key in _SECTIONS:
            kw[key] = _section(_SECTIONS[key], key, value)
        elif key in _PATHS:
            kw[key] = None if value is None else (base_dir / value if not Path(value).is_absolute() else Path(value))
        elif key == "calibration":
            try:
                kw[key] = None if value is None else CalibrationParams.from_dict(value)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"calibration: {exc}") from None
        elif key == "scene":
            try:
                kw[key] = SceneSpec.from_dict(value)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"scene: {exc}") from None
        elif key in ("band_counts", "classes"):
            kw[key] = None if value is None else tuple(value)
        else:
            kw[key] = value
    try:
        cfg = RunConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return config_from_dict(raw, path.parent)


def _positive(name: str, value, allow_none: bool = True) -> None:
    if value is None and allow_none:
        return
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
        raise ConfigError(f"{name} must be a positive number, got {value!r}")


def validate(cfg: RunConfig, require_inputs: bool = False) -> None:
    """Check numeric ranges and, with ``require_inputs``, that input files exist."""
    if cfg.out_dir is None:
        raise ConfigError("out_dir must be a directory path")
    if not 0 < cfg.alpha < 1:
        raise ConfigError(f"alpha must be in (0, 1), got {cfg.alpha}")
    if cfg.df_mode not in ("bands", "samples"):
        raise ConfigError(f"df_mode must be 'bands' or 'samples', got {cfg.df_mode!r}")
    if cfg.band_counts is not None and any(int(n) < 1 for n in cfg.band_counts):
        raise ConfigError("band_counts must be positive integers")
    _positive("ghs_spacing_nm", cfg.ghs_spacing_nm, allow_none=False)
    if cfg.variogram.family not in FAMILIES:
        raise ConfigError(f"variogram.family must be one of {FAMILIES}, got {cfg.variogram.family!r}")
    _positive("variogram.max_lag", cfg.variogram.max_lag)
    if not isinstance(cfg.variogram.n_bins, int) or cfg.variogram.n_bins < 3:
        raise ConfigError(f"variogram.n_bins must be an integer >= 3, got {cfg.variogram.n_bins!r}")
    _positive("kriging.out_pixel_size", cfg.kriging.out_pixel_size)
    _positive("kriging.search_radius", cfg.kriging.search_radius)
    if cfg.kriging.max_neighbors is not None and (not isinstance(cfg.kriging.max_neighbors, int) or cfg.kriging.max_neighbors < 1):
        raise ConfigError(f"kriging.max_neighbors must be a positive integer or null, got {cfg.kriging.max_neighbors!r}")
    if cfg.combine not in COMBINE_RULES:
        raise ConfigError(f"combine must be one of {COMBINE_RULES}, got {cfg.combine!r}")
    if not 0 <= cfg.harden_threshold <= 1:
        raise ConfigError(f"harden_threshold must be in [0, 1], got {cfg.harden_threshold}")
    if not isinstance(cfg.min_training_pixels, int) or cfg.min_training_pixels < 0:
        raise ConfigError("min_training_pixels must be a non-negative integer")
    _positive("assess.eps", cfg.assess.eps, allow_none=False)
    _positive("assess.pixel_area", cfg.assess.pixel_area)
    if not isinstance(cfg.ghs_samples, int) or cfg.ghs_samples < 2:
        raise ConfigError(f"ghs_samples must be an integer >= 2, got {cfg.ghs_samples!r}")
    b = cfg.benchmark
    if not b.seeds:
        raise ConfigError("benchmark.seeds must list at least one seed")
    if not b.methods:
        raise ConfigError("benchmark.methods must list at least one method")
    unknown = [m for m in b.methods if m not in METHODS]
    if unknown:
        raise ConfigError(f"benchmark.methods: unknown methods {unknown}; expected {METHODS}")
    for h in b.h_list:
        _positive("benchmark.h_list entries", h, allow_none=False)
    if require_inputs:
        for name in ("image", "signatures", "spectra_manifest"):
            p = getattr(cfg, name)
            if p is not None and not Path(p).exists():
                raise ConfigError(f"{name}: file {p} does not exist")
        if cfg.spectra_manifest is not None and cfg.calibration is None:
            raise ConfigError("calibration is required to convert spectra to DN")
