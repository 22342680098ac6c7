"""Gaussian kernel density estimation: point estimates and brute-force grids.

Everything here is the exact quadratic-cost path.  The expansion-based
approximations in :mod:`kdesearch.multipole` are validated against these
functions, so they stay deliberately simple: a single isotropic bandwidth,
direct sums over samples, no shortcuts.

Conventions shared with the numeric backends:

* ``exp(-q/2)`` factors with ``q >= 1490`` are treated as exactly zero, so
  both backends agree bitwise on which contributions vanish;
* normalized boxes live in the unit square, and grids attach density values
  to cell centers (see :mod:`kdesearch.grids`).
"""

from __future__ import annotations

import math

import numpy as np

from . import _backend
from .errors import DegenerateDataError, OutsideSupportError
from .grids import DensityGrid, GridSpec

__all__ = [
    "gaussian_kernel",
    "kde_estimate",
    "conditional_kde",
    "rule_of_thumb_bandwidth",
    "kde_grid",
]

TWO_PI = 2.0 * math.pi


def _vector(u, name: str) -> np.ndarray:
    a = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if a.ndim != 1:
        raise ValueError(f"{name} must be a single point")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


def _points(x, name: str) -> np.ndarray:
    a = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if a.ndim != 2 or a.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty list of points")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


def _check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not math.isfinite(sigma) or sigma <= 0.0:
        raise ValueError("sigma must be finite and positive")
    return sigma


def gaussian_kernel(u, sigma: float) -> float:
    """Isotropic Gaussian kernel (2*pi)^(-d/2) * exp(-|u|^2 / (2*sigma^2))."""
    a = _vector(u, "u")
    sigma = _check_sigma(sigma)
    q = float(a @ a) / (sigma * sigma)
    e = 0.0 if q >= _backend.reference.UNDERFLOW_Q else math.exp(-0.5 * q)
    return TWO_PI ** (-0.5 * a.shape[0]) * e


def kde_estimate(samples, z, sigma: float) -> float:
    """Kernel density estimate at ``z`` from equally weighted ``samples``.

    Returns ``(sigma^d N)^(-1) (2*pi)^(-d/2) * sum_i exp(-|z-x_i|^2/(2*sigma^2))``.
    """
    x = _points(samples, "samples")
    zv = _vector(z, "z")
    sigma = _check_sigma(sigma)
    n, d = x.shape
    if zv.shape[0] != d:
        raise ValueError("z and samples must share a dimension")
    s = float(_backend.kernel_sum(x, np.ones(n), zv[None, :], sigma)[0])
    return s * TWO_PI ** (-0.5 * d) / (sigma**d * n)


def conditional_kde(train_z, train_y, y_obs, z, sigma: float) -> float:
    """Conditional density estimate of ``z`` given an observed ``y_obs``.

    Numerator and denominator are plain kernel sums over the index-aligned
    training pairs; the shared bandwidth makes each numerator term a single
    Gaussian kernel over the concatenated vector.  The ``sigma^(-d_z)``
    prefactor makes the estimate integrate like a density over ``z``, and in
    particular makes conditioning on a constant ``y`` column reduce exactly
    to :func:`kde_estimate`.

    Raises :class:`OutsideSupportError` when every denominator term
    underflows to zero, i.e. ``y_obs`` is far outside the training data.
    """
    xz = _points(train_z, "train_z")
    xy = _points(train_y, "train_y")
    if xz.shape[0] != xy.shape[0]:
        raise ValueError("train_z and train_y must be index-aligned")
    yv = _vector(y_obs, "y_obs")
    zv = _vector(z, "z")
    sigma = _check_sigma(sigma)
    if xy.shape[1] != yv.shape[0]:
        raise ValueError("y_obs and train_y must share a dimension")
    if xz.shape[1] != zv.shape[0]:
        raise ValueError("z and train_z must share a dimension")

    n = xz.shape[0]
    ones = np.ones(n)
    den = float(_backend.kernel_sum(xy, ones, yv[None, :], sigma)[0])
    if den == 0.0:
        raise OutsideSupportError("observation lies outside the training support")
    joint = np.hstack([xz, xy])
    probe = np.concatenate([zv, yv])
    num = float(_backend.kernel_sum(joint, ones, probe[None, :], sigma)[0])
    d_z = zv.shape[0]
    return num / den * TWO_PI ** (-0.5 * d_z) / sigma**d_z


def rule_of_thumb_bandwidth(samples) -> float:
    """Plug-in bandwidth ``sd * (4 / ((d+2) n))^(1/(d+4))``.

    ``sd`` pools the per-dimension sample variances (ddof 1) into one
    isotropic scale.  (Near-)identical samples raise
    :class:`DegenerateDataError`; the threshold is relative to the data
    magnitude because the variance of constant samples rounds to a tiny
    positive value rather than zero for most constants.
    """
    x = _points(samples, "samples")
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least two samples")
    sd = math.sqrt(float(np.mean(np.var(x, axis=0, ddof=1))))
    scale = math.sqrt(float(np.mean(x * x)))
    if not sd > 1e-12 * scale:
        raise DegenerateDataError("samples (nearly) identical; bandwidth undefined")
    return sd * (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4))


def kde_grid(points, weights, spec: GridSpec, sigma: float) -> DensityGrid:
    """Weighted KDE evaluated at every cell center, normalized to unit mass.

    This is the O(M*N) reference path the expansion grids are measured
    against.  ``weights`` may be None for uniform weighting.
    """
    x = _points(points, "points")
    if x.shape[1] != 2:
        raise ValueError("grid densities are two-dimensional")
    sigma = _check_sigma(sigma)
    n = x.shape[0]
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,):
            raise ValueError("weights must align with points")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise ValueError("weights must be finite and non-negative")
    vals = _backend.kernel_sum(x, w, spec.probe_points(), sigma)
    grid = DensityGrid(spec, vals.reshape(spec.size, spec.size))
    return grid.normalized()
