"""Pure NumPy implementation of the density hot loops.

The compiled extension (``_core``) implements the same four functions with
identical numeric semantics; either can back the public API.  Conventions
shared by both:

* Gaussian factors are the bare exponentials ``exp(-||u||^2 / 2)`` with
  ``u = diff / sigma``; normalization constants are applied by callers or
  passed in via ``norm_const``.
* A factor is treated as exactly zero when ``||u||^2 >= 1490`` (the point
  where ``exp`` underflows past the subnormal range), so far-away terms are
  skipped identically on both paths.
* Monomials are enumerated by recurrence tables: ``mono[0] = 1`` and
  ``mono[b] = mono[parents[b]] * u[pdims[b]]``, valid for any graded order.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "kernel_sum",
    "expansion_coefficients",
    "expansion_values",
    "conditional_coefficients",
]

# exp(-q/2) == 0.0 in IEEE double for q beyond this; keep in sync with _core.pyx
UNDERFLOW_Q = 1490.0

_CHUNK = 1 << 19  # cap on rows*cols of temporary difference blocks


def _scaled_sq_dists(probes: np.ndarray, points: np.ndarray, sigma: float) -> np.ndarray:
    # Direct differences (not the expanded quadratic form) so results track
    # the compiled path to rounding error.
    diff = (probes[:, None, :] - points[None, :, :]) / sigma
    return np.einsum("mnd,mnd->mn", diff, diff)


def kernel_sum(
    points: np.ndarray, weights: np.ndarray, probes: np.ndarray, sigma: float
) -> np.ndarray:
    """Sum_i w_i * exp(-||p - x_i||^2 / (2 sigma^2)) for each probe p."""
    points = np.ascontiguousarray(points, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=float)
    probes = np.ascontiguousarray(probes, dtype=float)
    n = points.shape[0]
    out = np.empty(probes.shape[0])
    step = max(1, _CHUNK // max(n, 1))
    for m0 in range(0, probes.shape[0], step):
        q = _scaled_sq_dists(probes[m0 : m0 + step], points, sigma)
        e = np.where(q >= UNDERFLOW_Q, 0.0, np.exp(-0.5 * q))
        out[m0 : m0 + step] = e @ weights
    return out


def _monomials(u: np.ndarray, parents: np.ndarray, pdims: np.ndarray) -> np.ndarray:
    """Monomial table (rows of ``u``) x (multi-index), via the recurrence."""
    n, nb = u.shape[0], parents.shape[0]
    mono = np.empty((n, nb))
    mono[:, 0] = 1.0
    for b in range(1, nb):
        mono[:, b] = mono[:, parents[b]] * u[:, pdims[b]]
    return mono


def _monomials_3d(u: np.ndarray, parents: np.ndarray, pdims: np.ndarray) -> np.ndarray:
    c, n = u.shape[0], u.shape[1]
    mono = np.empty((c, n, parents.shape[0]))
    mono[:, :, 0] = 1.0
    for b in range(1, parents.shape[0]):
        mono[:, :, b] = mono[:, :, parents[b]] * u[:, :, pdims[b]]
    return mono


def expansion_coefficients(
    points: np.ndarray,
    weights: np.ndarray,
    centers: np.ndarray,
    sigma: float,
    parents: np.ndarray,
    pdims: np.ndarray,
) -> np.ndarray:
    """Rows C[c, b] = sum_i w_i exp(-||x_i-c||^2/(2 s^2)) ((x_i-c)/s)^a(b)."""
    points = np.asarray(points, dtype=float)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    nb = parents.shape[0]
    out = np.empty((centers.shape[0], nb))
    step = max(1, _CHUNK // max(points.shape[0] * nb, 1))
    for c0 in range(0, centers.shape[0], step):
        u = (points[None, :, :] - centers[c0 : c0 + step, None, :]) / sigma
        q = np.einsum("cnd,cnd->cn", u, u)
        we = np.where(q >= UNDERFLOW_Q, 0.0, np.exp(-0.5 * q)) * weights
        mono = _monomials_3d(u, parents, pdims)
        out[c0 : c0 + step] = np.einsum("cn,cnb->cb", we, mono)
    return out


def expansion_values(
    coeffs: np.ndarray,
    centers: np.ndarray,
    slots: np.ndarray,
    probes: np.ndarray,
    sigma: float,
    invfact: np.ndarray,
    parents: np.ndarray,
    pdims: np.ndarray,
    norm_const: float,
) -> np.ndarray:
    """Evaluate per-probe expansions; probe m uses row ``slots[m]``.

    Returns ``norm_const * exp(-||p-c||^2/(2 s^2)) * sum_b inv(a(b)!) u^a(b) C_b``
    clamped below at zero (the truncated series may go negative).
    """
    coeffs = np.asarray(coeffs, dtype=float)
    out = np.empty(probes.shape[0])
    step = max(1, _CHUNK // max(parents.shape[0], 1))
    for m0 in range(0, probes.shape[0], step):
        sl = slots[m0 : m0 + step]
        u = (probes[m0 : m0 + step] - centers[sl]) / sigma
        q = np.einsum("md,md->m", u, u)
        pref = np.where(q >= UNDERFLOW_Q, 0.0, norm_const * np.exp(-0.5 * q))
        mono = _monomials(u, parents, pdims)
        series = np.einsum("mb,b,mb->m", mono, invfact, coeffs[sl])
        out[m0 : m0 + step] = np.maximum(pref * series, 0.0)
    return out


def conditional_coefficients(
    points: np.ndarray,
    weights: np.ndarray,
    centers: np.ndarray,
    y_obs: np.ndarray,
    sigma: float,
    order: int,
    z_parents: np.ndarray,
    z_pdims: np.ndarray,
    z_degrees: np.ndarray,
) -> np.ndarray:
    """Joint-space expansions contracted against fixed trailing coordinates.

    ``points`` live in d_z + d_y dimensions with the free (z) block first.
    The full joint Taylor expansion about each center, truncated at total
    degree ``order`` and evaluated at probes whose y block equals ``y_obs``,
    collapses to a d_z-dimensional polynomial: grouping y-monomials by degree
    turns their sum into the truncated exponential series of the scalar
    s_i = <(x_i - c)_y, y_obs - c_y> / sigma^2.  The returned coefficients
    absorb the fixed factor exp(-||y_obs - c_y||^2/(2 s^2)) and the joint
    (2*pi)^(-d/2), so evaluation on the z grid uses ``expansion_values`` with
    ``norm_const=1``.
    """
    points = np.asarray(points, dtype=float)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    dj = points.shape[1]
    dz = dj - y_obs.shape[0]
    nb = z_parents.shape[0]
    out = np.zeros((centers.shape[0], nb))

    uy = (y_obs - centers[:, dz:]) / sigma  # (C, dy)
    qy = np.einsum("cd,cd->c", uy, uy)
    prefix = np.where(qy >= UNDERFLOW_Q, 0.0, np.exp(-0.5 * np.minimum(qy, UNDERFLOW_Q)))
    prefix *= (2.0 * np.pi) ** (-0.5 * dj)

    step = max(1, _CHUNK // max(points.shape[0] * nb, 1))
    for c0 in range(0, centers.shape[0], step):
        v = (points[None, :, :] - centers[c0 : c0 + step, None, :]) / sigma
        q = np.einsum("cnd,cnd->cn", v, v)
        we = np.where(q >= UNDERFLOW_Q, 0.0, np.exp(-0.5 * q)) * weights
        s = np.einsum("cnd,cd->cn", v[:, :, dz:], uy[c0 : c0 + step])

        # t[..., k] = sum_{j<=k} s^j / j!
        t = np.empty(s.shape + (order + 1,))
        t[..., 0] = 1.0
        term = np.ones_like(s)
        for k in range(1, order + 1):
            term *= s / k
            t[..., k] = t[..., k - 1] + term

        mono = _monomials_3d(v[:, :, :dz], z_parents, z_pdims)
        factors = we[:, :, None] * t[:, :, order - z_degrees]
        out[c0 : c0 + step] = np.einsum("cnb,cnb->cb", factors, mono)
    return out * prefix[:, None]
