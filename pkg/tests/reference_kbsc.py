"""Straight-line indicator kriging classifier used as a test oracle.

Everything is written the slow, obvious way: indicator maps by explicit
loops, the semivariogram from all pairs, and one dense primal kriging
solve over every sample for every target. Only the model fit is shared
with the production code, so a disagreement points at the plumbing
(binning, neighbor search, dual solve, combination) rather than at the
optimizer.
"""
import numpy as np
from scipy.spatial.distance import cdist

from krigeclass.variogram import EmpiricalVariogram, fit_model

from oracles import brute_variogram


def indicators(dn, lower, upper):
    rows, cols = dn.shape
    up = np.zeros((rows, cols))
    lo = np.zeros((rows, cols))
    for r in range(rows):
        for c in range(cols):
            up[r, c] = 1.0 if dn[r, c] <= upper else 0.0
            lo[r, c] = 1.0 if dn[r, c] >= lower else 0.0
    return up, lo


def gamma(family, nugget, sill, rng, h):
    u = h / rng
    if family == "spherical":
        g = np.where(u < 1, 1.5 * u - 0.5 * u**3, 1.0)
    elif family == "exponential":
        g = 1.0 - np.exp(-3.0 * u)
    elif family == "gaussian":
        g = 1.0 - np.exp(-3.0 * u * u)
    else:
        g = np.ones_like(h)
    return np.where(h > 0, nugget + sill * g, 0.0)


def centers(rows, cols, pixel_size):
    r, c = np.mgrid[0:rows, 0:cols]
    return np.column_stack([(c.ravel() + 0.5) * pixel_size, -(r.ravel() + 0.5) * pixel_size])


def krige_global(values, pixel_size, out_pixel_size, family, max_lag, n_bins):
    rows, cols = values.shape
    z = values.ravel()
    f = pixel_size / out_pixel_size
    out_rows, out_cols = int(round(rows * f)), int(round(cols * f))
    if np.all(z == z[0]):
        return np.full((out_rows, out_cols), z[0])
    lags, g, counts = brute_variogram(values, pixel_size, max_lag, n_bins)
    m = fit_model(EmpiricalVariogram(lags, g, counts), family).model
    src = centers(rows, cols, pixel_size)
    dst = centers(out_rows, out_cols, out_pixel_size)
    k = z.size
    a = np.ones((k + 1, k + 1))
    a[:k, :k] = gamma(family, m.nugget, m.sill, m.range, cdist(src, src))
    a[k, k] = 0.0
    b = np.ones((k + 1, dst.shape[0]))
    b[:k] = gamma(family, m.nugget, m.sill, m.range, cdist(src, dst))
    w = np.linalg.solve(a, b)[:k]
    pred = w.T @ z
    # targets sitting on a sample keep its value
    hit = cdist(dst, src) == 0
    rows_hit, cols_hit = np.nonzero(hit)
    pred[rows_hit] = z[cols_hit]
    return np.clip(pred, 0.0, 1.0).reshape(out_rows, out_cols)


def reference_kbsc(bands, pixel_size, thresholds, out_pixel_size, family="spherical", max_lag=None, n_bins=15, combine="product"):
    """thresholds: {label: [(lower, upper) per band]} -> {label: joint map}."""
    rows, cols = bands[0].shape
    if max_lag is None:
        max_lag = 0.5 * pixel_size * np.hypot(rows, cols)
    out = {}
    for label, limits in thresholds.items():
        joint = 1.0
        for dn, (lower, upper) in zip(bands, limits):
            up, lo = indicators(dn, lower, upper)
            p1 = krige_global(up, pixel_size, out_pixel_size, family, max_lag, n_bins)
            p2 = krige_global(lo, pixel_size, out_pixel_size, family, max_lag, n_bins)
            joint = joint * (p1 * p2 if combine == "product" else p1 + p2 - p1 * p2)
        out[label] = joint
    return out
