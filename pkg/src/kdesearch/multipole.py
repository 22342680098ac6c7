"""Expansion-based density grids: fast approximate KDE on cell centers.

The Gaussian kernel factorizes through a truncated multivariate Taylor
series around a center x*: one pass over the samples produces coefficients

    C_alpha = sum_i w_i exp(-|x_i - x*|^2/(2 s^2)) ((x_i - x*)/s)^alpha,

after which any probe is a cheap polynomial-times-Gaussian evaluation.  Grid
construction draws an expansion center per cell at random from the samples
(stochastic filtering): cells near a chosen center get an accurate local
estimate, cells far from every center underflow to zero, and the result is a
sparse field that a small Gaussian blur turns back into a smooth density.

The conditional variant fixes the trailing coordinates of joint-space
samples to an observed value and contracts the joint expansion down to the
two free dimensions before evaluation, so conditioning cost does not grow
with the number of observed dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.ndimage import gaussian_filter

from . import _backend
from .errors import ExpansionOverflowError, OutsideSupportError
from .grids import DensityGrid, GridSpec, SparseDensityGrid
from .kernels import TWO_PI, _check_sigma, _points, _vector
from .multiindex import monomial_tables

__all__ = [
    "MultipoleExpansion",
    "build_expansion",
    "evaluate_expansion",
    "multipole_grid",
    "conditional_multipole_grid",
    "gaussian_smooth",
]


@dataclass(frozen=True)
class MultipoleExpansion:
    """Truncated Taylor factorization of a weighted kernel sum about a center.

    ``coefficients`` follow the graded-lexicographic enumeration of
    :mod:`kdesearch.multiindex`; there are ``binomial(order+dim, dim)`` of
    them.
    """

    center: np.ndarray
    order: int
    sigma: float
    coefficients: np.ndarray

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def coefficient(self, alpha) -> float:
        """Coefficient for one exponent tuple, e.g. ``(2, 1)``."""
        t = monomial_tables(self.dim, self.order)
        alpha = tuple(int(a) for a in alpha)
        rows = np.flatnonzero((t.alphas == alpha).all(axis=1))
        if rows.size == 0:
            raise KeyError(f"no multi-index {alpha} at order {self.order}")
        return float(self.coefficients[rows[0]])


def _weights_for(points: np.ndarray, weights) -> np.ndarray:
    if weights is None:
        return np.ones(points.shape[0])
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (points.shape[0],):
        raise ValueError("weights must align with points")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise ValueError("weights must be finite and non-negative")
    return w


def build_expansion(points, weights, center, order: int, sigma: float) -> MultipoleExpansion:
    """One-pass coefficient accumulation over the weighted samples."""
    x = _points(points, "points")
    c = _vector(center, "center")
    if c.shape[0] != x.shape[1]:
        raise ValueError("center and points must share a dimension")
    if order < 0:
        raise ValueError("order must be non-negative")
    sigma = _check_sigma(sigma)
    w = _weights_for(x, weights)
    t = monomial_tables(x.shape[1], order)
    coeffs = _backend.expansion_coefficients(x, w, c[None, :], sigma, t.parents, t.pdims)[0]
    if not np.all(np.isfinite(coeffs)):
        raise ExpansionOverflowError(
            "expansion coefficients overflowed; choose a center closer to the samples"
        )
    return MultipoleExpansion(center=c, order=int(order), sigma=sigma, coefficients=coeffs)


def evaluate_expansion(expansion: MultipoleExpansion, probes):
    """Approximate ``sum_i w_i K(z - x_i)`` at one probe or a batch.

    Truncation can push the polynomial factor negative; values clamp at 0.
    """
    single = np.asarray(probes).ndim == 1
    p = _points(probes, "probes")
    if p.shape[1] != expansion.dim:
        raise ValueError("probes and expansion must share a dimension")
    t = monomial_tables(expansion.dim, expansion.order)
    vals = _backend.expansion_values(
        expansion.coefficients[None, :],
        expansion.center[None, :],
        np.zeros(p.shape[0], dtype=np.intp),
        p,
        expansion.sigma,
        t.invfact,
        t.parents,
        t.pdims,
        TWO_PI ** (-0.5 * expansion.dim),
    )
    return float(vals[0]) if single else vals


def _draw_centers(rng: np.random.Generator, n: int, m: int):
    """Random sample index per grid cell, flat row-major order.

    Returns the raw draws plus the distinct rows and the slot map into them,
    so each distinct center's expansion is built exactly once.
    """
    idx = rng.integers(0, n, size=m)
    uniq, inverse = np.unique(idx, return_inverse=True)
    return idx, uniq, inverse


def multipole_grid(
    points, weights, spec: GridSpec, sigma: float, order: int, rng: np.random.Generator
) -> SparseDensityGrid:
    """Approximate the weighted kernel-sum field on all cell centers.

    Each cell's value comes from the expansion around a sample point chosen
    uniformly at random (one draw per cell, row-major).  Values are raw
    kernel sums: callers normalize, usually after :func:`gaussian_smooth`.
    """
    x = _points(points, "points")
    if x.shape[1] != 2:
        raise ValueError("grid densities are two-dimensional")
    sigma = _check_sigma(sigma)
    w = _weights_for(x, weights)
    t = monomial_tables(2, order)
    m = spec.size * spec.size

    idx, uniq, inverse = _draw_centers(rng, x.shape[0], m)
    centers = x[uniq]
    coeffs = _backend.expansion_coefficients(x, w, centers, sigma, t.parents, t.pdims)
    if not np.all(np.isfinite(coeffs)):
        raise ExpansionOverflowError(
            "expansion coefficients overflowed; samples span too many bandwidths"
        )
    vals = _backend.expansion_values(
        coeffs,
        centers,
        inverse,
        spec.probe_points(),
        sigma,
        t.invfact,
        t.parents,
        t.pdims,
        TWO_PI ** (-1.0),
    )
    return SparseDensityGrid(
        spec,
        vals.reshape(spec.size, spec.size),
        center_indices=idx,
        n_expansion_builds=int(uniq.shape[0]),
        n_expansion_evaluations=m,
    )


def conditional_multipole_grid(
    train_joint,
    weights,
    y_obs,
    spec: GridSpec,
    sigma: float,
    order: int,
    rng: np.random.Generator,
) -> SparseDensityGrid:
    """Conditional density of the two lead coordinates given the trailing ones.

    ``train_joint`` rows are (z1, z2, y1, ..., y_k) with the free block
    first.  The joint expansion about each randomly drawn center is
    contracted against ``y_obs`` into a two-dimensional polynomial, so the
    grid pass costs the same as the unconditional one.  The result is
    normalized over the grid; if every cell underflows to zero the
    observation is outside the training support.
    """
    x = _points(train_joint, "train_joint")
    yv = _vector(y_obs, "y_obs")
    if x.shape[1] - yv.shape[0] != 2:
        raise ValueError("free block must be two-dimensional")
    sigma = _check_sigma(sigma)
    w = _weights_for(x, weights)
    t = monomial_tables(2, order)
    m = spec.size * spec.size

    idx, uniq, inverse = _draw_centers(rng, x.shape[0], m)
    centers = x[uniq]
    coeffs = _backend.conditional_coefficients(
        x, w, centers, yv, sigma, order, t.parents, t.pdims, t.degrees
    )
    if not np.all(np.isfinite(coeffs)):
        raise ExpansionOverflowError(
            "expansion coefficients overflowed; samples span too many bandwidths"
        )
    vals = _backend.expansion_values(
        coeffs,
        np.ascontiguousarray(centers[:, :2]),
        inverse,
        spec.probe_points(),
        sigma,
        t.invfact,
        t.parents,
        t.pdims,
        1.0,
    )
    raw = SparseDensityGrid(
        spec,
        vals.reshape(spec.size, spec.size),
        center_indices=idx,
        n_expansion_builds=int(uniq.shape[0]),
        n_expansion_evaluations=m,
    )
    if raw.total_mass <= 0.0:
        raise OutsideSupportError("observation lies outside the training support")
    return raw.normalized()


@lru_cache(maxsize=8)
def _edge_correction(size: int, sigma_cells: float) -> np.ndarray:
    ones = np.ones((size, size))
    return gaussian_filter(ones, sigma=sigma_cells, mode="constant", truncate=4.0)


def gaussian_smooth(grid: DensityGrid, sigma_cells: float) -> DensityGrid:
    """Blur a (possibly sparse) grid and renormalize to unit mass.

    The blur is truncated at four standard deviations.  Dividing by the
    blurred all-ones field undoes the mass the constant-padding border
    absorbs, so densities near edges are not unfairly damped.
    """
    if sigma_cells < 0.0:
        raise ValueError("sigma_cells must be non-negative")
    if sigma_cells == 0.0:
        return DensityGrid(grid.spec, grid.values.copy()).normalized()
    blurred = gaussian_filter(grid.values, sigma=sigma_cells, mode="constant", truncate=4.0)
    blurred /= _edge_correction(grid.spec.size, float(sigma_cells))
    return DensityGrid(grid.spec, blurred).normalized()
