"""Graded-lexicographic multi-index tables for truncated Taylor expansions.

A truncated expansion of order ``p`` in ``d`` variables has one term per
multi-index alpha with ``|alpha| <= p``; there are ``binomial(p+d, d)`` of
them.  Everything downstream (coefficient accumulation, series evaluation,
the compiled fast paths) assumes one fixed enumeration:

* indices are grouped by total degree, ascending;
* within a degree block the first coordinate descends, then the second, and
  so on (plain lexicographic descent on the exponent vector).

Under that ordering every nonzero alpha has a parent alpha - e_k (k = first
coordinate with a nonzero exponent) that appears earlier, so monomials can
be filled by a single multiply per term.  For d = 2 the block layout also
gives the closed-form slot ``g*(g+1)//2 + b`` for exponent pair ``(a, b)``
with ``g = a + b``, which the compiled backend relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial, prod
from typing import Iterator

import numpy as np

__all__ = ["MonomialTables", "monomial_tables", "n_coefficients"]


def n_coefficients(dim: int, order: int) -> int:
    """Number of multi-indices alpha with len d and |alpha| <= order."""
    if dim < 1 or order < 0:
        raise ValueError("need dim >= 1 and order >= 0")
    return comb(order + dim, dim)


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    # all exponent tuples summing to `total`, first coordinate descending
    if parts == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for tail in _compositions(total - head, parts - 1):
            yield (head, *tail)


@dataclass(frozen=True)
class MonomialTables:
    """Precomputed per-(dim, order) lookup tables, shared by both backends.

    ``parents[b]``/``pdims[b]`` give the one-multiply recurrence
    ``mono[b] = mono[parents[b]] * u[pdims[b]]`` (entry 0 is the constant
    term and has itself as parent).  ``invfact[b]`` is ``1/prod(alpha!)``
    and ``degrees[b]`` is ``|alpha|``.
    """

    dim: int
    order: int
    alphas: np.ndarray
    parents: np.ndarray
    pdims: np.ndarray
    invfact: np.ndarray
    degrees: np.ndarray

    @property
    def n_terms(self) -> int:
        return self.parents.shape[0]


@lru_cache(maxsize=None)
def monomial_tables(dim: int, order: int) -> MonomialTables:
    """Build (and cache) the enumeration tables for one (dim, order) pair."""
    nb = n_coefficients(dim, order)
    alphas = np.empty((nb, dim), dtype=np.int32)
    parents = np.zeros(nb, dtype=np.int32)
    pdims = np.zeros(nb, dtype=np.int32)
    invfact = np.empty(nb, dtype=np.float64)
    degrees = np.empty(nb, dtype=np.int32)

    slot: dict[tuple[int, ...], int] = {}
    b = 0
    for g in range(order + 1):
        for alpha in _compositions(g, dim):
            alphas[b] = alpha
            slot[alpha] = b
            degrees[b] = g
            invfact[b] = 1.0 / prod(factorial(a) for a in alpha)
            if g > 0:
                k = next(i for i, a in enumerate(alpha) if a > 0)
                parent = list(alpha)
                parent[k] -= 1
                parents[b] = slot[tuple(parent)]
                pdims[b] = k
            b += 1

    return MonomialTables(
        dim=dim,
        order=order,
        alphas=alphas,
        parents=parents,
        pdims=pdims,
        invfact=invfact,
        degrees=degrees,
    )
