"""Raster grids, band stacks and their on-disk format.

A raster on disk is a pair of files: a raw band-sequential little-endian
data file and a plain-text header next to it (``<path>.hdr``) made of
``key = value`` lines::

    rows = 64
    cols = 64
    bands = 2
    dtype = f32
    pixel_size = 188.0
    origin_x = 0.0
    origin_y = 0.0
    band_low_nm = 620, 770
    band_high_nm = 680, 860

``origin`` is the (easting, northing) of the upper-left corner. Row 0 is the
northern row, so pixel centers sit at ``origin_x + (col + 0.5) * pixel_size``
and ``origin_y - (row + 0.5) * pixel_size``.

NaN marks nodata in f32 data; u8 data has no nodata value.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

DTYPES = {"u8": np.dtype("<u1"), "f32": np.dtype("<f4")}


class RasterFormatError(ValueError):
    """Header or data file does not describe a valid raster."""


@dataclass(frozen=True)
class RasterGrid:
    """A single band of pixel values with its geometry.

    ``values`` is stored as a read-only float64 array of shape (rows, cols).
    """

    values: np.ndarray
    pixel_size: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"raster values must be a non-empty 2-D array, got shape {values.shape}")
        if not self.pixel_size > 0:
            raise ValueError(f"pixel_size must be positive, got {self.pixel_size}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "pixel_size", float(self.pixel_size))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def same_geometry(self, other: "RasterGrid") -> bool:
        return (
            self.shape == other.shape
            and math.isclose(self.pixel_size, other.pixel_size, rel_tol=1e-12)
            and np.allclose(self.origin, other.origin, rtol=0, atol=1e-9 * self.pixel_size)
        )

    def with_values(self, values) -> "RasterGrid":
        """Same geometry, new values."""
        return RasterGrid(values, self.pixel_size, self.origin)

    def centers(self) -> np.ndarray:
        """Pixel-center coordinates as an array of shape (rows*cols, 2), row-major."""
        x = self.origin[0] + (np.arange(self.cols) + 0.5) * self.pixel_size
        y = self.origin[1] - (np.arange(self.rows) + 0.5) * self.pixel_size
        xx, yy = np.meshgrid(x, y)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def extent(self) -> tuple[float, float]:
        """Width and height in meters."""
        return self.cols * self.pixel_size, self.rows * self.pixel_size


@dataclass(frozen=True)
class BandStack:
    """Co-registered bands plus the wavelength window each band integrates."""

    bands: tuple[RasterGrid, ...]
    band_windows: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        bands = tuple(self.bands)
        if not bands:
            raise ValueError("a band stack needs at least one band")
        windows = tuple(self.band_windows) or tuple((float(i), float(i) + 1.0) for i in range(len(bands)))
        if len(windows) != len(bands):
            raise ValueError(f"{len(bands)} bands but {len(windows)} band windows")
        for lo, hi in windows:
            if not lo < hi:
                raise ValueError(f"band window ({lo}, {hi}) must have low < high")
        first = bands[0]
        for b in bands[1:]:
            if not first.same_geometry(b):
                raise ValueError("all bands in a stack must share rows, cols, pixel_size and origin")
        object.__setattr__(self, "bands", bands)
        object.__setattr__(self, "band_windows", tuple((float(lo), float(hi)) for lo, hi in windows))

    @classmethod
    def from_array(cls, array, pixel_size, origin=(0.0, 0.0), band_windows=()) -> "BandStack":
        """Build from an array of shape (bands, rows, cols)."""
        array = np.asarray(array, dtype=np.float64)
        if array.ndim == 2:
            array = array[None]
        return cls(tuple(RasterGrid(a, pixel_size, origin) for a in array), tuple(band_windows))

    @property
    def n_bands(self) -> int:
        return len(self.bands)

    @property
    def geometry(self) -> RasterGrid:
        return self.bands[0]

    def to_array(self) -> np.ndarray:
        return np.stack([b.values for b in self.bands])

    def pixels(self) -> np.ndarray:
        """Pixel vectors, shape (rows*cols, bands)."""
        return self.to_array().reshape(self.n_bands, -1).T

    def select(self, indices: Sequence[int]) -> "BandStack":
        return BandStack(tuple(self.bands[i] for i in indices), tuple(self.band_windows[i] for i in indices))


def header_path(path) -> Path:
    return Path(f"{os.fspath(path)}.hdr")


def _parse_header(text: str) -> dict[str, str]:
    entries = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise RasterFormatError(f"header line {lineno} is not 'key = value': {line!r}")
        key, value = line.split("=", 1)
        entries[key.strip().lower()] = value.strip()
    return entries


def _floats(value: str) -> list[float]:
    return [float(v) for v in value.replace(",", " ").split()]


def read_header(path) -> dict:
    """Parse a header file into typed fields."""
    raw = _parse_header(Path(path).read_text())
    try:
        rows, cols, bands = int(raw["rows"]), int(raw["cols"]), int(raw.get("bands", 1))
        dtype = raw.get("dtype", "f32").lower()
        pixel_size = float(raw["pixel_size"])
        origin = (float(raw.get("origin_x", 0.0)), float(raw.get("origin_y", 0.0)))
    except KeyError as exc:
        raise RasterFormatError(f"header {path} is missing required key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise RasterFormatError(f"header {path}: {exc}") from None
    if dtype not in DTYPES:
        raise RasterFormatError(f"unknown dtype {dtype!r}; expected one of {sorted(DTYPES)}")
    if rows < 1 or cols < 1 or bands < 1:
        raise RasterFormatError(f"header {path} declares an empty raster ({rows}x{cols}x{bands})")
    if not pixel_size > 0:
        raise RasterFormatError(f"header {path} declares non-positive pixel_size {pixel_size}")
    lows = _floats(raw["band_low_nm"]) if "band_low_nm" in raw else [float(i) for i in range(bands)]
    highs = _floats(raw["band_high_nm"]) if "band_high_nm" in raw else [lo + 1.0 for lo in lows]
    if len(lows) != bands or len(highs) != bands:
        raise RasterFormatError(f"header {path} must list {bands} band windows")
    names = [n.strip() for n in raw["band_names"].split(",")] if "band_names" in raw else None
    if names is not None and len(names) != bands:
        raise RasterFormatError(f"header {path} must list {bands} band names")
    return {
        "rows": rows,
        "cols": cols,
        "bands": bands,
        "dtype": dtype,
        "pixel_size": pixel_size,
        "origin": origin,
        "band_windows": list(zip(lows, highs)),
        "band_names": names,
    }


def load_raster(path, header=None) -> BandStack:
    """Read a band-sequential raster. ``header`` defaults to ``<path>.hdr``."""
    meta = read_header(header if header is not None else header_path(path))
    dtype = DTYPES[meta["dtype"]]
    expected = meta["rows"] * meta["cols"] * meta["bands"] * dtype.itemsize
    data = Path(path).read_bytes()
    if len(data) != expected:
        raise RasterFormatError(f"{path}: header declares {expected} bytes, file holds {len(data)}")
    array = np.frombuffer(data, dtype=dtype).astype(np.float64)
    array = array.reshape(meta["bands"], meta["rows"], meta["cols"])
    return BandStack.from_array(array, meta["pixel_size"], meta["origin"], meta["band_windows"])


def _fmt(x: float) -> str:
    return repr(float(x))


def save_raster(stack: BandStack | RasterGrid, path, dtype: str = "f32", band_names=None) -> None:
    """Write ``stack`` as raw band-sequential data plus a header.

    ``band_names`` (optional, no commas) are stored in the header, e.g. the
    class label of each band of a membership raster.

    f32 output round-trips exactly for values representable in float32.
    u8 output rounds half away from zero and clips to [0, 255]; NaN is not
    allowed in u8 output.
    """
    if isinstance(stack, RasterGrid):
        stack = BandStack((stack,))
    if not isinstance(stack, BandStack):
        raise TypeError(f"expected BandStack or RasterGrid, got {type(stack).__name__}")
    if dtype not in DTYPES:
        raise RasterFormatError(f"unknown dtype {dtype!r}")
    array = stack.to_array()
    if dtype == "u8":
        if np.isnan(array).any():
            raise ValueError("u8 rasters cannot hold NaN nodata")
        array = np.clip(np.floor(np.abs(array) + 0.5) * np.sign(array), 0, 255)
    geom = stack.geometry
    lows = ", ".join(_fmt(lo) for lo, _ in stack.band_windows)
    highs = ", ".join(_fmt(hi) for _, hi in stack.band_windows)
    header = (
        f"rows = {geom.rows}\n"
        f"cols = {geom.cols}\n"
        f"bands = {stack.n_bands}\n"
        f"dtype = {dtype}\n"
        f"pixel_size = {_fmt(geom.pixel_size)}\n"
        f"origin_x = {_fmt(geom.origin[0])}\n"
        f"origin_y = {_fmt(geom.origin[1])}\n"
        f"band_low_nm = {lows}\n"
        f"band_high_nm = {highs}\n"
    )
    if band_names is not None:
        names = [str(n) for n in band_names]
        if len(names) != stack.n_bands or any("," in n or "\n" in n for n in names):
            raise ValueError("band_names needs one comma-free name per band")
        header += f"band_names = {', '.join(names)}\n"
    path = Path(path)
    path.write_bytes(array.astype(DTYPES[dtype]).tobytes())
    header_path(path).write_text(header)


def upscale_mean(grid: RasterGrid, factor: int) -> RasterGrid:
    """Aggregate ``factor`` x ``factor`` blocks to their arithmetic mean.

    NaN pixels are excluded from each block mean; an all-NaN block stays NaN.
    Dimensions must be divisible by ``factor`` (no padding).
    """
    if int(factor) != factor or factor < 2:
        raise ValueError(f"factor must be an integer >= 2, got {factor}")
    factor = int(factor)
    rows, cols = grid.shape
    if rows % factor or cols % factor:
        raise ValueError(f"grid {rows}x{cols} is not divisible by factor {factor}")
    blocks = grid.values.reshape(rows // factor, factor, cols // factor, factor)
    valid = ~np.isnan(blocks)
    counts = valid.sum(axis=(1, 3))
    sums = np.where(valid, blocks, 0.0).sum(axis=(1, 3))
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return RasterGrid(means, grid.pixel_size * factor, grid.origin)


def stretch_u8(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Linear stretch of [lo, hi] onto 0..255, rounding half away from zero.

    Values outside the range are clamped; NaN maps to 0.
    """
    if not lo < hi:
        raise ValueError(f"stretch needs lo < hi, got lo={lo}, hi={hi}")
    scaled = (np.asarray(values, dtype=np.float64) - lo) / (hi - lo) * 255.0
    scaled = np.clip(np.nan_to_num(scaled, nan=0.0), 0.0, 255.0)
    # all scaled values are >= 0, so floor(x + 0.5) is half-away-from-zero
    return np.floor(scaled + 0.5).astype(np.uint8)


def to_pgm_preview(grid: RasterGrid, lo: float, hi: float, path) -> None:
    """Write a binary (P5) 8-bit PGM image of ``grid``."""
    pixels = stretch_u8(grid.values, lo, hi)
    head = f"P5\n{grid.cols} {grid.rows}\n255\n".encode("ascii")
    Path(path).write_bytes(head + pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise RasterFormatError(f"{path} is not a binary PGM")
    cols, rows = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(rows, cols)


def to_csv(grid: RasterGrid, path) -> None:
    """Export as ``row,col,value`` lines for plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "col", "value"])
        for (r, c), v in np.ndenumerate(grid.values):
            writer.writerow([r, c, repr(float(v))])
