"""Ordinary kriging: BLUE weights under a sum-to-one constraint, point and grid prediction.

The weights solve the augmented system

    [ G  1 ] [ w  ]   [ g0 ]
    [ 1' 0 ] [ mu ] = [ 1  ]

with G[l, m] = gamma(|x_l - x_m|) and g0[l] = gamma(|x_l - x0|).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .raster import RasterGrid
from .variogram import VariogramModel, model_eval

PIVOT_TOL = 1e-12


class KrigingError(ArithmeticError):
    """The kriging system cannot be solved (singular or ill-posed)."""


@dataclass(frozen=True)
class KrigingSystem:
    locations: np.ndarray
    values: np.ndarray
    model: VariogramModel
    target: tuple[float, float]

    def __post_init__(self):
        loc = np.atleast_2d(np.asarray(self.locations, dtype=np.float64))
        vals = np.asarray(self.values, dtype=np.float64).ravel()
        if loc.shape[1] != 2 or loc.shape[0] < 1:
            raise ValueError(f"locations must have shape (k, 2) with k >= 1, got {loc.shape}")
        if vals.shape[0] != loc.shape[0]:
            raise ValueError(f"{loc.shape[0]} locations but {vals.shape[0]} values")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "target", (float(self.target[0]), float(self.target[1])))

    @property
    def k(self) -> int:
        return self.locations.shape[0]


@dataclass(frozen=True)
class KrigingConfig:
    """Neighborhood search settings.

    ``max_neighbors=None`` means global kriging. ``search_radius=None`` means
    four times the variogram range. With at most ``global_max_samples``
    valid samples the whole data set is always used.
    """

    max_neighbors: int | None = 16
    search_radius: float | None = None
    clamp: bool = True
    global_max_samples: int = 64

    def __post_init__(self):
        if self.max_neighbors is not None and self.max_neighbors < 1:
            raise ValueError(f"max_neighbors must be >= 1, got {self.max_neighbors}")
        if self.search_radius is not None and not self.search_radius > 0:
            raise ValueError(f"search_radius must be positive, got {self.search_radius}")


def augmented_matrix(locations: np.ndarray, model: VariogramModel) -> np.ndarray:
    k = locations.shape[0]
    a = np.ones((k + 1, k + 1))
    a[:k, :k] = model_eval(model, cdist(locations, locations))
    a[k, k] = 0.0
    return a


def _lu(a: np.ndarray):
    # the pivot check below reports singularity with a clearer message
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    pivots = np.abs(np.diag(lu))
    scale = max(np.abs(a).max(), 1.0)
    if pivots.min() < PIVOT_TOL * scale:
        raise KrigingError(
            f"singular kriging system: smallest pivot {pivots.min():.3e} "
            f"(threshold {PIVOT_TOL * scale:.3e}); duplicate locations or a zero-sill model?"
        )
    return lu, piv


def _check_distinct(locations: np.ndarray) -> None:
    if locations.shape[0] > 1:
        d = cdist(locations, locations)
        np.fill_diagonal(d, np.inf)
        if d.min() == 0.0:
            i, j = np.unravel_index(np.argmin(d), d.shape)
            raise KrigingError(f"duplicate sample locations at indices {i} and {j}")


def solve_weights(system: KrigingSystem) -> tuple[np.ndarray, float]:
    """Ordinary kriging weights and the Lagrange multiplier."""
    _check_distinct(system.locations)
    if system.k == 1:
        return np.ones(1), 0.0
    a = augmented_matrix(system.locations, system.model)
    b = np.ones(system.k + 1)
    b[:-1] = model_eval(system.model, np.hypot(*(system.locations - np.asarray(system.target)).T))
    sol = scipy.linalg.lu_solve(_lu(a), b)
    return sol[:-1], float(sol[-1])


def predict_point(system: KrigingSystem) -> float:
    """Kriged estimate at the target; a sample at the target is returned as is."""
    d = np.hypot(*(system.locations - np.asarray(system.target)).T)
    hit = np.flatnonzero(d == 0.0)
    if hit.size:
        _check_distinct(system.locations)
        return float(system.values[hit[0]])
    weights, _ = solve_weights(system)
    return float(np.dot(weights, system.values))


def output_grid(grid: RasterGrid, out_pixel_size: float) -> RasterGrid:
    """Empty grid covering the same extent as ``grid`` at ``out_pixel_size``."""
    if not out_pixel_size > 0:
        raise ValueError(f"out_pixel_size must be positive, got {out_pixel_size}")
    width, height = grid.extent()
    shape = []
    for extent in (height, width):
        n = extent / out_pixel_size
        if abs(n - round(n)) > 1e-9 * max(n, 1.0) or round(n) < 1:
            raise ValueError(f"out_pixel_size {out_pixel_size} does not tile an extent of {extent} m")
        shape.append(int(round(n)))
    return RasterGrid(np.zeros(shape), out_pixel_size, grid.origin)


@dataclass
class KrigingDiagnostics:
    mode: str = "global"
    n_samples: int = 0
    n_targets: int = 0
    nan_cells: int = 0
    exact_hits: int = 0
    clamped_low: int = 0
    clamped_high: int = 0
    min_neighbors: int = 0
    max_neighbors: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "extra"}
        d.update(self.extra)
        return d


def _global_predict(locs, vals, model, targets, chunk=2048):
    # dual form: z' A^-1 b(x0), one factorization for every target
    k = locs.shape[0]
    lu_piv = _lu(augmented_matrix(locs, model))
    rhs = np.zeros(k + 1)
    rhs[:k] = vals
    dual = scipy.linalg.lu_solve(lu_piv, rhs)
    out = np.empty(targets.shape[0])
    for start in range(0, targets.shape[0], chunk):
        t = targets[start:start + chunk]
        g = model_eval(model, cdist(t, locs))
        out[start:start + chunk] = g @ dual[:k] + dual[k]
    return out


def _local_predict(locs, vals, model, targets, max_neighbors, radius, diag, chunk=4096):
    tree = cKDTree(locs)
    kq = min(max_neighbors, locs.shape[0])
    dist, idx = tree.query(targets, k=kq, distance_upper_bound=radius)
    if kq == 1:
        dist, idx = dist[:, None], idx[:, None]
    found = np.isfinite(dist)
    counts = found.sum(axis=1)
    out = np.full(targets.shape[0], np.nan)
    diag.min_neighbors = int(counts.min())
    diag.max_neighbors = int(counts.max())
    for n in np.unique(counts):
        if n == 0:
            continue
        sel = np.flatnonzero(counts == n)
        if n == 1:
            out[sel] = vals[idx[sel, 0]]
            continue
        for start in range(0, sel.size, chunk):
            s = sel[start:start + chunk]
            nb = idx[s, :n]
            p = locs[nb]
            a = np.ones((s.size, n + 1, n + 1))
            a[:, :n, :n] = model_eval(model, np.linalg.norm(p[:, :, None, :] - p[:, None, :, :], axis=-1))
            a[:, n, n] = 0.0
            b = np.ones((s.size, n + 1))
            b[:, :n] = model_eval(model, dist[s, :n])
            try:
                w = np.linalg.solve(a, b[..., None])[..., 0]
            except np.linalg.LinAlgError as exc:
                raise KrigingError(f"singular local kriging system with {n} neighbors") from exc
            out[s] = np.einsum("ij,ij->i", w[:, :n], vals[nb])
    return out


def predict_grid(
    samples: RasterGrid,
    model: VariogramModel,
    out_pixel_size: float | None = None,
    config: KrigingConfig = KrigingConfig(),
) -> tuple[RasterGrid, KrigingDiagnostics]:
    """Krige pixel-center samples onto a grid of ``out_pixel_size`` over the same extent.

    NaN samples are ignored. Targets that coincide with a sample take its
    value exactly. Cells without any sample inside the search radius are NaN.
    With ``config.clamp`` the predictions are clipped to [0, 1] afterwards.
    """
    out = output_grid(samples, out_pixel_size or samples.pixel_size)
    targets = out.centers()
    locs = samples.centers()
    vals = samples.values.ravel()
    ok = ~np.isnan(vals)
    locs, vals = locs[ok], vals[ok]
    if vals.size == 0:
        raise ValueError("no valid samples to krige")
    diag = KrigingDiagnostics(n_samples=int(vals.size), n_targets=int(targets.shape[0]))
    use_global = config.max_neighbors is None or vals.size <= max(config.global_max_samples, config.max_neighbors)
    radius = config.search_radius if config.search_radius is not None else 4.0 * model.range
    if use_global:
        diag.mode = "global"
        diag.min_neighbors = diag.max_neighbors = int(vals.size)
        if np.all(vals == vals[0]):
            pred = np.full(targets.shape[0], vals[0])
        else:
            pred = _global_predict(locs, vals, model, targets)
    else:
        diag.mode = "local"
        if np.all(vals == vals[0]):
            counts = cKDTree(locs).query_ball_point(targets, r=radius, return_length=True)
            pred = np.where(counts > 0, vals[0], np.nan)
            diag.min_neighbors, diag.max_neighbors = int(counts.min()), int(counts.max())
        else:
            pred = _local_predict(locs, vals, model, targets, config.max_neighbors, radius, diag)

    # exactness at sample locations, independent of round-off in the solve
    sample_index = {(x, y): i for i, (x, y) in enumerate(map(tuple, locs))}
    hits = [(t, sample_index[key]) for t, key in enumerate(map(tuple, targets)) if key in sample_index]
    if hits:
        t_idx, s_idx = np.array(hits).T
        pred[t_idx] = vals[s_idx]
    diag.exact_hits = len(hits)

    if config.clamp:
        diag.clamped_low = int(np.sum(pred < 0.0))
        diag.clamped_high = int(np.sum(pred > 1.0))
        pred = np.clip(pred, 0.0, 1.0)
    diag.nan_cells = int(np.isnan(pred).sum())
    return out.with_values(pred.reshape(out.shape)), diag
