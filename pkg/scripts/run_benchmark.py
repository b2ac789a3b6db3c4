"""Run the 20-seed benchmark and tally how often KBSC beats MAXLIKE at h = native.

Usage: python scripts/run_benchmark.py [--jobs N] [--range-px R]
"""
import argparse
import collections
import csv
from dataclasses import replace
from pathlib import Path

from krigeclass.cli import cmd_benchmark
from krigeclass.config import load_config
from krigeclass.synth import crop_scene_spec

HERE = Path(__file__).resolve().parent


def tally(csv_path, native):
    table = {}
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            if not row["error"]:
                table[(row["seed"], row["method"], float(row["h"]))] = (float(row["s_mean"]), float(row["d_mean"]))
    seeds = sorted({k[0] for k in table}, key=int)
    wins = collections.Counter()
    for s in seeds:
        k = table[(s, "kbsc", native)]
        for method in ("maxlike", "bayclass", "belclass", "fuzzyclass"):
            if (s, method, native) in table:
                o = table[(s, method, native)]
                wins[(method, "S")] += k[0] < o[0]
                wins[(method, "D")] += k[1] < o[1]
    return len(seeds), wins


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--range-px", type=float, default=48.0, help="autocorrelation range in fine pixels")
    args = p.parse_args()
    cfg = load_config(HERE / "benchmark_config.json")
    cfg = replace(cfg, scene=crop_scene_spec(autocorr_range=args.range_px * 23.5))
    cmd_benchmark(cfg, jobs=args.jobs)
    n, wins = tally(cfg.out_dir / "benchmark.csv", cfg.scene.coarse_pixel_size)
    for (method, metric), count in sorted(wins.items()):
        print(f"KBSC lower mean {metric} than {method}: {count}/{n} seeds")


if __name__ == "__main__":
    main()
