"""Command-line entry point: ``krigeclass {synth,classify,assess,benchmark,validate}``.

Exit codes: 0 success, 1 runtime error, 2 usage or config error. Logs go to
stderr as key=value lines; stdout carries one JSON summary per command.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .assess import align, area_report, closeness_report
from .config import METHODS, ConfigError, RunConfig, config_from_dict, load_config, validate
from .kbsc import ProbabilityMap
from .pipeline import CSV_COLUMNS, classify, fmt_value, format_row, manifest_thresholds, run_benchmark, scene_thresholds
from .raster import BandStack, header_path, load_raster, read_header, save_raster, to_csv, to_pgm_preview
from .signatures import SignatureStats
from .synth import generate_scene

log = logging.getLogger("krigeclass")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad command-line arguments."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _setup_logging() -> None:
    level = os.environ.get("KSC_LOG_LEVEL", "WARNING").upper()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter('ts=%(asctime)s level=%(levelname)s module=%(name)s msg="%(message)s"'))
    root = logging.getLogger("krigeclass")
    root.handlers[:] = [handler]
    root.setLevel(getattr(logging, level, logging.WARNING))
    root.propagate = False


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _maps_stack(maps) -> BandStack:
    return BandStack(tuple(m.grid for m in maps))


def save_maps(maps, path: Path) -> None:
    save_raster(_maps_stack(maps), path, band_names=[m.label for m in maps])


def load_maps(path) -> list[ProbabilityMap]:
    """Per-class maps from a multiband raster; band names give the class labels."""
    header = read_header(header_path(path))
    stack = load_raster(path)
    names = header.get("band_names") or [f"class{i}" for i in range(stack.n_bands)]
    return [ProbabilityMap(b, name, "proportion") for b, name in zip(stack.bands, names)]


def _parse_list(text: str, kind):
    try:
        return [kind(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None


# --- subcommands -----------------------------------------------------------


def cmd_synth(cfg: RunConfig, seeds=None) -> dict:
    """Write truth labels, fine and coarse DN, true coarse proportions, signatures and the scene description."""
    written = []
    for seed in seeds or [cfg.scene.seed]:
        spec = cfg.scene.with_seed(seed)
        out = cfg.out_dir if seeds is None else cfg.out_dir / f"seed{seed}"
        out.mkdir(parents=True, exist_ok=True)
        scene = generate_scene(spec)
        save_raster(scene.fine_labels, out / "fine_labels.raw", dtype="u8")
        save_raster(scene.fine_dn, out / "fine_dn.raw")
        save_raster(scene.coarse_dn, out / "coarse_dn.raw")
        save_maps(scene.coarse_proportions, out / "coarse_proportions.raw")
        scene_thresholds(cfg, spec).save(out / "signatures.json")
        _write_json(out / "scene_spec.json", spec.to_dict())
        log.info("wrote scene seed %d to %s", seed, out)
        written.append(str(out))
    return {"command": "synth", "outputs": written}


def _load_stats(cfg: RunConfig, stack: BandStack) -> SignatureStats:
    if cfg.signatures is not None:
        return SignatureStats.load(cfg.signatures)
    if cfg.spectra_manifest is not None:
        return manifest_thresholds(cfg, stack)
    raise ConfigError("classify needs either signatures or spectra_manifest")


def cmd_classify(cfg: RunConfig, method: str, h: float | None = None, bands=None) -> dict:
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; expected one of {METHODS}")
    if cfg.image is None:
        raise ConfigError("image: classify needs an input raster")
    validate(cfg, require_inputs=True)
    stack = load_raster(cfg.image)
    stats = _load_stats(cfg, stack)
    h = h if h is not None else cfg.kriging.out_pixel_size
    result = classify(stack, stats, cfg, method, h, bands)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {}
    if result.maps:
        outputs["maps"] = cfg.out_dir / f"{method}_maps.raw"
        save_maps(result.maps, outputs["maps"])
        if method == "kbsc":
            outputs["proportions"] = cfg.out_dir / f"{method}_proportions.raw"
            save_maps(result.proportions(), outputs["proportions"])
    if result.labels is not None:
        outputs["labels"] = cfg.out_dir / f"{method}_labels.raw"
        save_raster(result.labels, outputs["labels"])
    report = {
        "method": method,
        "h": h if h is not None else stack.geometry.pixel_size,
        "classes": [m.label for m in result.maps],
        "errors": result.errors,
        **result.report,
    }
    outputs["report"] = cfg.out_dir / f"{method}_report.json"
    _write_json(outputs["report"], report)
    if result.errors:
        raise RuntimeError(f"classes failed: {sorted(result.errors)}")
    return {"command": "classify", "method": method, "outputs": {k: str(v) for k, v in outputs.items()}}


def cmd_assess(cfg: RunConfig, ref_path, test_path) -> dict:
    ref, test = load_maps(ref_path), load_maps(test_path)
    ref_labels, test_labels = sorted(m.label for m in ref), sorted(m.label for m in test)
    if ref_labels != test_labels:
        raise ConfigError(f"class lists differ: reference {ref_labels}, test {test_labels}")
    try:
        ref, test = align(ref, test)
    except ValueError as exc:
        raise ConfigError(f"maps cannot be aligned: {exc}") from None
    rep = closeness_report(ref, test, cfg.assess.eps)
    areas = area_report(test, pixel_area=cfg.assess.pixel_area)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    summary = {"closeness": rep.to_dict(), "areas": areas.to_dict()}
    _write_json(out / "assess_report.json", summary)
    for name, grid in (("s", rep.s_grid), ("d", rep.d_grid)):
        save_raster(grid, out / f"{name}_grid.raw")
        to_csv(grid, out / f"{name}_grid.csv")
        finite = grid.values[np.isfinite(grid.values)]
        hi = float(finite.max()) if finite.size and finite.max() > 0 else 1.0
        to_pgm_preview(grid, 0.0, hi, out / f"{name}_grid.pgm")
    return {"command": "assess", **summary}


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_benchmark(cfg: RunConfig, seeds=None, methods=None, h_list=None, jobs: int = 1) -> dict:
    b = cfg.benchmark
    seeds = list(seeds if seeds is not None else b.seeds)
    methods = list(methods if methods is not None else b.methods)
    h_list = list(h_list if h_list is not None else b.h_list)
    if not seeds or not methods or not h_list:
        raise ConfigError("benchmark needs at least one seed, method and h")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise UsageError(f"unknown methods {unknown}; expected {METHODS}")
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    results = run_benchmark(cfg, seeds, methods, h_list, jobs)
    rows, times = [], []
    for seed, (seed_rows_, runtimes, maps) in zip(seeds, results):
        rows.extend(format_row(r) for r in seed_rows_)
        times.extend([t["seed"], t["method"], fmt_value(t["h"]), f"{t['seconds']:.3f}"] for t in runtimes)
        if b.save_maps:
            map_dir = out / "maps"
            map_dir.mkdir(exist_ok=True)
            for (method, h), props in maps.items():
                save_maps(props, map_dir / f"seed{seed}_{method}_h{fmt_value(h)}.raw")
    (out / "benchmark.csv").write_text(_csv_text(CSV_COLUMNS, rows))
    # wall-clock times vary run to run, so they live outside the deterministic table
    (out / "benchmark_runtime.csv").write_text(_csv_text(("seed", "method", "h", "seconds"), times))
    errors = sum(1 for r in rows if r[-1])
    return {"command": "benchmark", "rows": len(rows), "failed_rows": errors, "csv": str(out / "benchmark.csv")}


def cmd_validate(cfg: RunConfig) -> dict:
    validate(cfg, require_inputs=True)
    return {"command": "validate", "status": "ok", "config": cfg.to_dict()}


# --- argument handling -----------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="krigeclass", description="Kriging-based soft classification of coarse multispectral imagery.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides out_dir)")
    s = sub.add_parser("synth", parents=[common], help="generate a synthetic scene")
    s.add_argument("--seeds", help="comma-separated seeds, one sub-directory each")
    c = sub.add_parser("classify", parents=[common], help="classify an image")
    c.add_argument("--method", required=True, help=f"one of {', '.join(METHODS)}")
    c.add_argument("--h", type=float, help="output grid distance in meters")
    c.add_argument("--bands", help="comma-separated band indices to use")
    a = sub.add_parser("assess", parents=[common], help="compare two sets of class maps")
    a.add_argument("--ref", type=Path, required=True, help="reference proportion maps")
    a.add_argument("--test", type=Path, required=True, help="maps under test")
    b = sub.add_parser("benchmark", parents=[common], help="seeds x methods x grid distances on synthetic scenes")
    b.add_argument("--seeds", help="comma-separated seeds")
    b.add_argument("--method", help="comma-separated methods")
    b.add_argument("--h", help="comma-separated grid distances in meters")
    b.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sub.add_parser("validate", parents=[common], help="check a configuration without running")
    return p


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config is not None else config_from_dict({})
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def run(argv=None) -> dict:
    args = build_parser().parse_args(argv)
    if args.command is None:
        raise UsageError("a subcommand is required: synth, classify, assess, benchmark or validate")
    cfg = _load(args)
    if args.command == "synth":
        return cmd_synth(cfg, _parse_list(args.seeds, int) if args.seeds else None)
    if args.command == "classify":
        bands = _parse_list(args.bands, int) if args.bands else None
        return cmd_classify(cfg, args.method, args.h, bands)
    if args.command == "assess":
        return cmd_assess(cfg, args.ref, args.test)
    if args.command == "benchmark":
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        return cmd_benchmark(
            cfg,
            _parse_list(args.seeds, int) if args.seeds else None,
            _parse_list(args.method, str) if args.method else None,
            _parse_list(args.h, float) if args.h else None,
            args.jobs,
        )
    return cmd_validate(cfg)


def main(argv=None) -> int:
    _setup_logging()
    try:
        summary = run(argv)
    except (UsageError, ConfigError) as exc:
        _error(exc, EXIT_USAGE)
        return EXIT_USAGE
    except Exception as exc:  # any module failure
        log.debug("traceback", exc_info=True)
        _error(exc, EXIT_RUNTIME)
        return EXIT_RUNTIME
    print(json.dumps(summary, sort_keys=True, default=_json_default))
    return EXIT_OK


def _error(exc: Exception, code: int) -> None:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
