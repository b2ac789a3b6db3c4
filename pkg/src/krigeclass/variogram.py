"""Omnidirectional empirical semivariograms and permissible model fitting."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .raster import RasterGrid

FAMILIES = ("nugget", "spherical", "exponential", "gaussian")


def _g_spherical(u):
    return np.where(u < 1.0, 1.5 * u - 0.5 * u**3, 1.0)


def _g_exponential(u):
    return 1.0 - np.exp(-3.0 * u)


def _g_gaussian(u):
    return 1.0 - np.exp(-3.0 * u * u)


def _g_nugget(u):
    return np.ones_like(u)


_SHAPES = {
    "nugget": _g_nugget,
    "spherical": _g_spherical,
    "exponential": _g_exponential,
    "gaussian": _g_gaussian,
}


@dataclass(frozen=True)
class VariogramModel:
    """gamma(h) = nugget + sill * g(h / range) for h > 0, and gamma(0) = 0.

    ``range`` is the practical range: exponential and gaussian models reach
    95% of the partial sill there.
    """

    family: str = "spherical"
    nugget: float = 0.0
    sill: float = 1.0
    range: float = 1.0

    def __post_init__(self):
        for name in ("nugget", "sill", "range"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.family not in FAMILIES:
            raise ValueError(f"unknown variogram family {self.family!r}; expected one of {FAMILIES}")
        if self.nugget < 0 or self.sill < 0:
            raise ValueError(f"nugget and partial sill must be >= 0, got {self.nugget}, {self.sill}")
        if not self.range > 0:
            raise ValueError(f"range must be positive, got {self.range}")

    @property
    def total_sill(self) -> float:
        return self.nugget + self.sill

    def __call__(self, h):
        return model_eval(self, h)

    def to_dict(self) -> dict:
        return asdict(self)


def model_eval(model: VariogramModel, h):
    """Semivariance at lag(s) ``h`` (meters); exactly 0 at h == 0."""
    h_arr = np.asarray(h, dtype=np.float64)
    if np.any(h_arr < 0):
        raise ValueError("lag must be non-negative")
    shape = _SHAPES[model.family](h_arr / model.range)
    out = np.where(h_arr > 0, model.nugget + model.sill * shape, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EmpiricalVariogram:
    lags: np.ndarray
    gamma: np.ndarray
    pair_counts: np.ndarray

    def __post_init__(self):
        lags, gamma = np.asarray(self.lags, float), np.asarray(self.gamma, float)
        counts = np.asarray(self.pair_counts, dtype=np.int64)
        if not (lags.shape == gamma.shape == counts.shape) or lags.ndim != 1:
            raise ValueError("lags, gamma and pair_counts must be equal-length 1-D arrays")
        if lags.size and (np.any(lags <= 0) or np.any(np.diff(lags) <= 0)):
            raise ValueError("lags must be positive and strictly ascending")
        if np.any(gamma < 0) or np.any(counts < 0):
            raise ValueError("gamma and pair counts must be non-negative")
        for name, v in (("lags", lags), ("gamma", gamma), ("pair_counts", counts)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def nonempty(self) -> np.ndarray:
        return self.pair_counts > 0

    def to_dict(self) -> dict:
        return {"lags": self.lags.tolist(), "gamma": self.gamma.tolist(), "pair_counts": self.pair_counts.tolist()}

    def to_csv(self, path) -> None:
        lines = ["lag,gamma,count"]
        lines += [f"{h!r},{g!r},{n}" for h, g, n in zip(self.lags.tolist(), self.gamma.tolist(), self.pair_counts.tolist())]
        Path(path).write_text("\n".join(lines) + "\n")


# relative slack for pair distances that sit on a bin edge or on max_lag;
# on square grids the half-diagonal default max_lag is itself a pair distance
EDGE_RTOL = 1e-12


def default_max_lag(grid: RasterGrid) -> float:
    width, height = grid.extent()
    return 0.5 * math.hypot(width, height)


def empirical_variogram(grid: RasterGrid, max_lag: float | None = None, n_bins: int = 15) -> EmpiricalVariogram:
    """Omnidirectional semivariogram over all pixel pairs up to ``max_lag``.

    Bins are equal-width over (0, max_lag], right edges inclusive. Each bin reports the mean pair
    distance as its lag (the bin center when the bin is empty), the
    semivariance sum((z_i - z_j)^2) / (2 N) and the pair count N. Empty bins
    get gamma 0 and count 0. Pairs touching a NaN pixel are skipped.
    """
    if max_lag is None:
        max_lag = default_max_lag(grid)
    if not max_lag > 0:
        raise ValueError(f"max_lag must be positive, got {max_lag}")
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    z = grid.values
    valid = ~np.isnan(z)
    if valid.sum() < 2:
        raise ValueError("need at least two valid pixels for a variogram")
    rows, cols = z.shape
    zf = np.where(valid, z, 0.0)
    width = max_lag / n_bins
    reach = int(math.floor(max_lag / grid.pixel_size))
    sq_parts: list[list[float]] = [[] for _ in range(n_bins)]
    dist_parts: list[list[float]] = [[] for _ in range(n_bins)]
    counts = np.zeros(n_bins, dtype=np.int64)
    for dy in range(0, min(reach, rows - 1) + 1):
        dx_start = 1 if dy == 0 else -min(reach, cols - 1)
        for dx in range(dx_start, min(reach, cols - 1) + 1):
            dist = math.hypot(dx, dy) * grid.pixel_size
            if dist > max_lag * (1.0 + EDGE_RTOL):
                continue
            # a distance on a bin edge (up to rounding) belongs to the lower bin
            k = min(max(int(math.ceil(dist / width * (1.0 - EDGE_RTOL))) - 1, 0), n_bins - 1)
            a = (slice(dy, rows), slice(max(dx, 0), cols + min(dx, 0)))
            b = (slice(0, rows - dy), slice(max(-dx, 0), cols - max(dx, 0)))
            both = valid[a] & valid[b]
            n = int(both.sum())
            if n == 0:
                continue
            diff = (zf[a] - zf[b])[both]
            sq_parts[k].append(float(np.dot(diff, diff)))
            dist_parts[k].append(dist * n)
            counts[k] += n
    if counts.sum() == 0:
        raise ValueError("no valid pixel pairs within max_lag")
    lags = np.empty(n_bins)
    gamma = np.zeros(n_bins)
    for k in range(n_bins):
        if counts[k]:
            lags[k] = math.fsum(dist_parts[k]) / counts[k]
            gamma[k] = math.fsum(sq_parts[k]) / (2.0 * counts[k])
        else:
            lags[k] = (k + 0.5) * width
    return EmpiricalVariogram(lags, gamma, counts)


@dataclass(frozen=True)
class VariogramFit:
    model: VariogramModel
    residual: float
    range_identified: bool = True

    def __post_init__(self):
        object.__setattr__(self, "residual", float(self.residual))
        object.__setattr__(self, "range_identified", bool(self.range_identified))

    def to_dict(self) -> dict:
        return {**self.model.to_dict(), "residual": self.residual, "range_identified": self.range_identified}


class FitError(RuntimeError):
    """The optimizer failed; ``best`` holds the best iterate found."""

    def __init__(self, message: str, best: VariogramFit | None = None):
        super().__init__(message)
        self.best = best


def weighted_residual(emp: EmpiricalVariogram, model: VariogramModel) -> float:
    """sum N(h) * (gamma_hat(h) - gamma_model(h))^2 over non-empty bins."""
    m = emp.nonempty
    r = emp.gamma[m] - model_eval(model, emp.lags[m])
    return math.fsum(emp.pair_counts[m] * r * r)


def _nnls2(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[float, float, float]:
    """min sum w (y - c0 - c x)^2 over c0, c >= 0; returns (c0, c, objective)."""
    sw, sx, sy = w.sum(), np.dot(w, x), np.dot(w, y)
    sxx, sxy = np.dot(w, x * x), np.dot(w, x * y)
    candidates = [(0.0, 0.0)]
    det = sw * sxx - sx * sx
    if det > 1e-14 * sw * max(sxx, 1e-300):
        c0 = (sxx * sy - sx * sxy) / det
        c = (sw * sxy - sx * sy) / det
        if c0 >= 0 and c >= 0:
            candidates.append((c0, c))
    candidates.append((max(sy / sw, 0.0), 0.0))
    if sxx > 0:
        candidates.append((0.0, max(sxy / sxx, 0.0)))
    best = None
    for c0, c in candidates:
        r = y - c0 - c * x
        f = float(np.dot(w, r * r))
        if best is None or f < best[2]:
            best = (c0, c, f)
    return best


def _smallest_equivalent_range(profile, grid, values, log_a: float) -> float:
    """Slide the range down to the left end of a flat valley of the objective.

    Some variograms (few lags below the range, flat beyond) are fit equally
    well by a whole interval of ranges. Taking the smallest one makes the
    result independent of where the optimizer happened to stop.
    """
    best = profile(log_a)
    level = best + 1e-9 * abs(best) + 1e-15
    below = [k for k, x in enumerate(grid) if x < log_a]
    outside = [k for k in below if values[k] > level]
    if not outside:
        if below and values[0] <= level:
            return float(grid[0])
        left = float(grid[0])
    else:
        left = float(grid[outside[-1]])
    right = log_a
    if profile(left) <= level:
        return left
    for _ in range(80):
        mid = 0.5 * (left + right)
        if profile(mid) <= level:
            right = mid
        else:
            left = mid
    return right


def fit_model(emp: EmpiricalVariogram, family: str = "spherical", sill_seed: float | None = None) -> VariogramFit:
    """Weighted least-squares fit of (nugget, partial sill, range).

    Weights are the pair counts. For a fixed range the model is linear in
    nugget and partial sill, so those two come from a closed-form
    non-negative least-squares solve and only the range is searched: a
    log-spaced grid of 48 seeds over [1e-3 * first lag, 10 * last lag], then
    a bounded Brent refinement (tolerance 1e-10 relative to the last lag)
    around the best seed. ``sill_seed`` is accepted for API symmetry with
    seeded optimizers; the profile search does not need it.

    ``range_identified`` is False when the data cannot pin the range down:
    a flat variogram (fitted range at or below the first lag, or negligible
    structured sill).
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown variogram family {family!r}")
    m = emp.nonempty
    if m.sum() < 3:
        raise ValueError(f"need at least 3 non-empty lag bins to fit, got {int(m.sum())}")
    h, g, w = emp.lags[m], emp.gamma[m], emp.pair_counts[m].astype(np.float64)
    g_scale = float(g.max())
    h_scale = float(h.max())
    if g_scale == 0.0:
        model = VariogramModel(family, 0.0, 0.0, h_scale)
        return VariogramFit(model, 0.0, range_identified=False)
    if family == "nugget":
        total = math.fsum(w * g) / math.fsum(w)
        model = VariogramModel("nugget", total, 0.0, h_scale)
        return VariogramFit(model, weighted_residual(emp, model), range_identified=False)

    gn, hn, wn = g / g_scale, h / h_scale, w / w.sum()
    shape = _SHAPES[family]

    def profile(log_a):
        return _nnls2(shape(hn / math.exp(log_a)), gn, wn)[2]

    lo, hi = math.log(1e-3 * float(hn.min())), math.log(10.0)
    grid = np.linspace(lo, hi, 48)
    values = [profile(x) for x in grid]
    i = int(np.argmin(values))
    left, right = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(profile, bounds=(left, right), method="bounded", options={"xatol": 1e-10})
    log_a = float(res.x) if res.fun <= values[i] else float(grid[i])
    log_a = _smallest_equivalent_range(profile, grid, values, log_a)
    if not np.isfinite(profile(log_a)):
        a = math.exp(float(grid[i]))
        c0, c, _ = _nnls2(shape(hn / a), gn, wn)
        best = VariogramModel(family, c0 * g_scale, c * g_scale, a * h_scale)
        raise FitError("variogram fit did not converge", best=VariogramFit(best, weighted_residual(emp, best)))
    a = math.exp(log_a)
    c0, c, _ = _nnls2(shape(hn / a), gn, wn)
    model = VariogramModel(family, c0 * g_scale, c * g_scale, a * h_scale)
    identified = a * h_scale > float(h.min()) and c > 1e-6 * (c0 + c)
    return VariogramFit(model, weighted_residual(emp, model), range_identified=identified)


def save_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj.to_dict(), indent=2, sort_keys=True) + "\n")
