"""Numeric backend selection.

The compiled extension is used when it is importable; otherwise the NumPy
reference implementation takes over.  ``KDESEARCH_BACKEND=pure`` or
``=compiled`` forces the choice (the latter fails loudly if the extension is
missing).  Both implementations share the contracts documented in
``reference.py`` and agree to rounding error; ``backend_name()`` reports
which one is active.
"""

from __future__ import annotations

import os

import numpy as np

from . import reference

__all__ = [
    "backend_name",
    "kernel_sum",
    "expansion_coefficients",
    "expansion_values",
    "conditional_coefficients",
]

_requested = os.environ.get("KDESEARCH_BACKEND", "").strip().lower()
if _requested not in ("", "pure", "compiled"):
    raise ImportError(
        f"KDESEARCH_BACKEND must be 'pure' or 'compiled', got {_requested!r}"
    )

if _requested == "pure":
    _impl = reference
    _name = "pure"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        _name = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = reference
        _name = "pure"


def backend_name() -> str:
    return _name


def _writable(a: np.ndarray) -> np.ndarray:
    # the compiled extension takes non-const memoryviews
    return a.copy() if not a.flags.writeable else a


def _f1(a) -> np.ndarray:
    return _writable(np.ascontiguousarray(a, dtype=np.float64))


def _f2(a) -> np.ndarray:
    return _writable(np.ascontiguousarray(np.atleast_2d(np.asarray(a, dtype=np.float64))))


def _i1(a) -> np.ndarray:
    return _writable(np.ascontiguousarray(a, dtype=np.int32))


def kernel_sum(points, weights, probes, sigma: float) -> np.ndarray:
    return _impl.kernel_sum(_f2(points), _f1(weights), _f2(probes), float(sigma))


def expansion_coefficients(points, weights, centers, sigma: float, parents, pdims) -> np.ndarray:
    return _impl.expansion_coefficients(
        _f2(points), _f1(weights), _f2(centers), float(sigma), _i1(parents), _i1(pdims)
    )


def expansion_values(
    coeffs, centers, slots, probes, sigma: float, invfact, parents, pdims, norm_const: float
) -> np.ndarray:
    return _impl.expansion_values(
        _f2(coeffs),
        _f2(centers),
        _writable(np.ascontiguousarray(slots, dtype=np.intp)),
        _f2(probes),
        float(sigma),
        _f1(invfact),
        _i1(parents),
        _i1(pdims),
        float(norm_const),
    )


def conditional_coefficients(
    points, weights, centers, y_obs, sigma: float, order: int, z_parents, z_pdims, z_degrees
) -> np.ndarray:
    points = _f2(points)
    y_obs = _f1(y_obs)
    if points.shape[1] - y_obs.shape[0] != 2:
        raise ValueError("free block must be two-dimensional")
    return _impl.conditional_coefficients(
        points,
        _f1(weights),
        _f2(centers),
        y_obs,
        float(sigma),
        int(order),
        _i1(z_parents),
        _i1(z_pdims),
        _i1(z_degrees),
    )
