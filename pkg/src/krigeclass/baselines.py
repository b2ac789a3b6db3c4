"""Conventional per-pixel classifiers used as baselines.

* ``maxlike``: Gaussian maximum likelihood (hard labels)
* ``bayclass``: Gaussian posterior probabilities
* ``belclass``: Dempster-Shafer belief and plausibility from the posteriors
* ``fuzzyclass``: Gaussian memberships under fuzzy mean/covariance signatures

All densities are evaluated in log space.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .kbsc import ProbabilityMap
from .raster import BandStack, RasterGrid

RIDGE_TRIGGER = 1e-10
RIDGE_SCALE = 1e-8


def _stabilize(cov: np.ndarray) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    n = cov.shape[0]
    trace = float(np.trace(cov))
    eig_min = float(np.linalg.eigvalsh(cov).min())
    if trace <= 0:
        return cov + RIDGE_SCALE * np.eye(n)
    if eig_min < RIDGE_TRIGGER * trace:
        cov = cov + RIDGE_SCALE * trace / n * np.eye(n)
    return cov


@dataclass(frozen=True)
class GaussianSignature:
    label: str
    mean: np.ndarray
    cov: np.ndarray
    prior: float = 1.0

    def to_dict(self) -> dict:
        return {"label": self.label, "mean": self.mean.tolist(), "cov": self.cov.tolist(), "prior": self.prior}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianSignature":
        return cls(d["label"], np.asarray(d["mean"], float), np.asarray(d["cov"], float), float(d["prior"]))


# fuzzy signatures carry the same fields; the difference is how they are trained
FuzzySignature = GaussianSignature


def save_signatures(sigs: Sequence[GaussianSignature], path) -> None:
    Path(path).write_text(json.dumps([s.to_dict() for s in sigs], indent=2) + "\n")


def load_signatures(path) -> list[GaussianSignature]:
    return [GaussianSignature.from_dict(d) for d in json.loads(Path(path).read_text())]


def _training_pixels(stack: BandStack, selection) -> np.ndarray:
    pixels = stack.pixels()
    sel = np.asarray(selection)
    if sel.dtype == bool:
        x = pixels[sel.ravel()]
    else:
        sel = np.atleast_2d(sel)
        x = pixels[sel[:, 0] * stack.geometry.cols + sel[:, 1]]
    return x[~np.isnan(x).any(axis=1)]


def _normalized_priors(labels, priors) -> dict[str, float]:
    if priors is None:
        return {k: 1.0 / len(labels) for k in labels}
    missing = set(labels) - set(priors)
    if missing:
        raise ValueError(f"priors missing for classes {sorted(missing)}")
    total = float(sum(priors[k] for k in labels))
    if total <= 0 or any(priors[k] < 0 for k in labels):
        raise ValueError("priors must be non-negative with a positive sum")
    return {k: priors[k] / total for k in labels}


def train_gaussian(
    stack: BandStack,
    training: Mapping[str, np.ndarray],
    priors: Mapping[str, float] | None = None,
) -> list[GaussianSignature]:
    """Per-class sample mean and covariance (n - 1 denominator).

    ``training[label]`` is either a boolean mask shaped like the image or an
    array of (row, col) pairs. Covariances get a small ridge when they are
    close to singular.
    """
    labels = list(training)
    pri = _normalized_priors(labels, priors)
    sigs = []
    for label in labels:
        x = _training_pixels(stack, training[label])
        if x.shape[0] == 0:
            raise ValueError(f"class {label!r} has no training pixels")
        mean = x.mean(axis=0)
        cov = np.cov(x, rowvar=False, ddof=1) if x.shape[0] > 1 else np.zeros((x.shape[1],) * 2)
        cov = _stabilize(np.atleast_2d(cov))
        sigs.append(GaussianSignature(label, mean, cov, pri[label]))
    return sigs


def train_fuzzy(
    stack: BandStack,
    training: Mapping[str, np.ndarray],
    memberships: Mapping[str, np.ndarray] | None = None,
) -> list[FuzzySignature]:
    """Membership-weighted mean and covariance per class.

    ``training`` selects the pixels (as in :func:`train_gaussian`);
    ``memberships[label]`` gives each selected pixel's membership in that
    class, defaulting to 1 (crisp). The covariance uses reliability weights,
    sum(f (x - m)(x - m)') / (sum f - sum f^2 / sum f), which for crisp
    memberships is the ordinary n - 1 sample covariance.
    """
    sigs = []
    for label, selection in training.items():
        x = _training_pixels(stack, selection)
        if x.shape[0] == 0:
            raise ValueError(f"class {label!r} has no training pixels")
        f = np.ones(x.shape[0]) if memberships is None or label not in memberships else np.asarray(memberships[label], float)
        if f.shape[0] != x.shape[0]:
            raise ValueError(f"class {label!r}: {f.shape[0]} memberships for {x.shape[0]} pixels")
        if np.any(f < 0) or f.sum() <= 0:
            raise ValueError(f"class {label!r}: memberships must be non-negative with a positive sum")
        fsum = f.sum()
        mean = (f[:, None] * x).sum(axis=0) / fsum
        d = x - mean
        denom = fsum - (f * f).sum() / fsum
        cov = (f[:, None] * d).T @ d / denom if denom > 0 else np.zeros((x.shape[1],) * 2)
        sigs.append(FuzzySignature(label, mean, _stabilize(np.atleast_2d(cov)), 1.0 / len(training)))
    return sigs


def log_densities(pixels: np.ndarray, sigs: Sequence[GaussianSignature]) -> np.ndarray:
    """log N(x; mean_c, cov_c) for every pixel and class, shape (n_classes, n_pixels)."""
    out = np.empty((len(sigs), pixels.shape[0]))
    for i, s in enumerate(sigs):
        try:
            chol = np.linalg.cholesky(s.cov)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"covariance of class {s.label!r} is singular after ridge") from exc
        d = np.linalg.solve(chol, (pixels - s.mean).T)
        maha = np.einsum("ij,ij->j", d, d)
        logdet = 2.0 * np.log(np.diag(chol)).sum()
        out[i] = -0.5 * (maha + logdet + pixels.shape[1] * math.log(2 * math.pi))
    return out


def _log_posteriors(stack: BandStack, sigs, use_priors=True):
    pixels = stack.pixels()
    nan = np.isnan(pixels).any(axis=1)
    logp = log_densities(np.where(nan[:, None], 0.0, pixels), sigs)
    if use_priors:
        with np.errstate(divide="ignore"):
            logp = logp + np.log([s.prior for s in sigs])[:, None]
    return logp, nan


def _posterior_maps(stack, sigs, use_priors, kind) -> list[ProbabilityMap]:
    logp, nan = _log_posteriors(stack, sigs, use_priors)
    post = np.exp(logp - logsumexp(logp, axis=0))
    post[:, nan] = np.nan
    geom = stack.geometry
    return [ProbabilityMap(geom.with_values(p.reshape(geom.shape)), s.label, kind) for s, p in zip(sigs, post)]


def maxlike(stack: BandStack, sigs: Sequence[GaussianSignature]) -> RasterGrid:
    """Index of the class with the largest log prior + log density; ties go to the first class.

    NaN pixels get -1.
    """
    logp, nan = _log_posteriors(stack, sigs)
    labels = np.argmax(logp, axis=0).astype(np.float64)
    labels[nan] = -1
    return stack.geometry.with_values(labels.reshape(stack.geometry.shape))


def bayclass(stack: BandStack, sigs: Sequence[GaussianSignature]) -> list[ProbabilityMap]:
    """Posterior probability of each class; sums to 1 per pixel."""
    return _posterior_maps(stack, sigs, True, "posterior")


def fuzzyclass(stack: BandStack, fsigs: Sequence[FuzzySignature]) -> list[ProbabilityMap]:
    """Memberships proportional to the fuzzy-signature densities, normalized per pixel."""
    return _posterior_maps(stack, fsigs, False, "membership")


@dataclass(frozen=True)
class BeliefMaps:
    belief: list[ProbabilityMap]
    plausibility: list[ProbabilityMap]
    ignorance: RasterGrid

    def interval(self, i: int) -> np.ndarray:
        return self.plausibility[i].values - self.belief[i].values


def belief_masses(support: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Basic probability assignment from normalized supports, shape (n_classes, ...).

    The ignorance set gets m(theta) = 1 - max support; each singleton gets
    m(c) = support_c * max support, so all masses sum to 1.
    """
    top = support.max(axis=0)
    return support * top, 1.0 - top


def belclass(stack: BandStack, sigs: Sequence[GaussianSignature]) -> BeliefMaps:
    """Belief = m(c), plausibility = m(c) + m(theta) per class."""
    post = bayclass(stack, sigs)
    support = np.stack([p.values for p in post])
    mass, ignorance = belief_masses(support)
    plaus = mass + ignorance
    geom = stack.geometry
    bel = [ProbabilityMap(geom.with_values(m), s.label, "belief") for s, m in zip(sigs, mass)]
    pl = [ProbabilityMap(geom.with_values(m), s.label, "plausibility") for s, m in zip(sigs, plaus)]
    return BeliefMaps(bel, pl, geom.with_values(ignorance))


def one_hot(labels: RasterGrid, class_names: Sequence[str]) -> list[ProbabilityMap]:
    """Hard labels as 0/1 proportion maps; unlabelled (-1) pixels are all zeros."""
    return [
        ProbabilityMap(labels.with_values((labels.values == i).astype(np.float64)), name, "proportion")
        for i, name in enumerate(class_names)
    ]


def normalized_beliefs(bel: BeliefMaps) -> list[ProbabilityMap]:
    stacked = np.stack([m.values for m in bel.belief])
    total = stacked.sum(axis=0)
    props = stacked / np.where(total > 0, total, 1.0)
    return [ProbabilityMap(m.grid.with_values(p), m.label, "proportion") for m, p in zip(bel.belief, props)]


def pure_training_masks(stack: BandStack, stats, classes: Sequence[str], min_pixels: int = 0) -> dict[str, np.ndarray]:
    """Pixels whose DN lies in a class's [L, U] in every band and in no other class's.

    Used as the training set when none is given, so the baselines can run
    from signature thresholds alone. A class with fewer than ``min_pixels``
    such pixels is topped up with the pixels closest to its signature mean
    (distance in units of the signature SD per band, ties by pixel order).
    """
    arr = stack.to_array()
    inside = {}
    for label in classes:
        m = np.ones(stack.geometry.shape, dtype=bool)
        for b in range(stack.n_bands):
            th = stats.threshold(label, b)
            with np.errstate(invalid="ignore"):
                m &= (arr[b] >= th.lower) & (arr[b] <= th.upper)
        inside[label] = m
    masks = {}
    for label in classes:
        others = np.zeros_like(inside[label])
        for other in classes:
            if other != label:
                others |= inside[other]
        masks[label] = inside[label] & ~others
        if masks[label].sum() < min_pixels:
            masks[label] = masks[label] | _nearest_to_signature(arr, stats, label, min_pixels)
    return masks


def _nearest_to_signature(arr: np.ndarray, stats, label: str, count: int) -> np.ndarray:
    dist = np.zeros(arr.shape[1:])
    for b in range(arr.shape[0]):
        th = stats.threshold(label, b)
        scale = th.sd if th.sd > 0 else 1.0
        dist = dist + ((arr[b] - th.mean) / scale) ** 2
    flat = np.where(np.isnan(dist), np.inf, dist).ravel()
    order = np.argsort(flat, kind="stable")[:count]
    order = order[np.isfinite(flat[order])]
    mask = np.zeros(flat.size, dtype=bool)
    mask[order] = True
    return mask.reshape(arr.shape[1:])
