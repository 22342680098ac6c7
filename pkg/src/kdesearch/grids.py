"""Regular square grids over the unit box and densities defined on them.

Grids are indexed row major: cell (i, j) covers
``[lo + i*cw, lo + (i+1)*cw) x [lo + j*cw, lo + (j+1)*cw)`` where ``cw`` is
the cell width, and flattens to row ``i*G + j``.  Probe points sit at cell
centers.  Densities are plain weight fields; :meth:`DensityGrid.normalized`
rescales them to unit mass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "GridSpec",
    "DensityGrid",
    "SparseDensityGrid",
    "delta_grid",
    "total_variation",
]


@dataclass(frozen=True)
class GridSpec:
    """Square grid: ``size`` cells per axis spanning [lo, hi] in both axes."""

    size: int
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError("size must be >= 1")
        if not self.hi > self.lo:
            raise ValueError("hi must exceed lo")

    @property
    def cell_width(self) -> float:
        return (self.hi - self.lo) / self.size

    def centers_1d(self) -> np.ndarray:
        return self.lo + (np.arange(self.size) + 0.5) * self.cell_width

    def probe_points(self) -> np.ndarray:
        """All cell centers, shape (size**2, 2), row major, read-only."""
        return _probes_for(self.size, self.lo, self.hi)

    def cell_of(self, point: np.ndarray) -> tuple[int, int]:
        """Cell containing ``point``; points on the upper edge map inward."""
        ij = np.floor((np.asarray(point, dtype=float) - self.lo) / self.cell_width)
        i, j = np.clip(ij, 0, self.size - 1).astype(int)
        return int(i), int(j)


@lru_cache(maxsize=64)
def _probes_for(size: int, lo: float, hi: float) -> np.ndarray:
    c = GridSpec(size, lo, hi).centers_1d()
    xx, yy = np.meshgrid(c, c, indexing="ij")
    probes = np.stack([xx, yy], axis=-1).reshape(-1, 2)
    probes.setflags(write=False)
    return probes


@dataclass
class DensityGrid:
    """Non-negative weight field on a :class:`GridSpec`."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.spec.size, self.spec.size):
            raise ValueError("values shape does not match grid spec")

    @property
    def total_mass(self) -> float:
        return float(self.values.sum())

    def normalized(self) -> "DensityGrid":
        total = self.total_mass
        if not np.isfinite(total) or total <= 0.0:
            raise ValueError("cannot normalize a grid with non-positive mass")
        return DensityGrid(self.spec, self.values / total)

    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.values))

    def sample_cell(self, rng: np.random.Generator) -> tuple[int, int]:
        """Draw a cell index with probability proportional to its value.

        Consumes exactly one uniform variate from ``rng``.
        """
        flat = self.values.reshape(-1)
        cum = np.cumsum(flat)
        total = cum[-1]
        if not np.isfinite(total) or total <= 0.0:
            raise ValueError("cannot sample from a grid with non-positive mass")
        u = rng.random() * total
        idx = int(np.searchsorted(cum, u, side="right"))
        idx = min(idx, flat.size - 1)
        return divmod(idx, self.spec.size)

    def to_csv(self, path: str) -> None:
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g")

    def to_pgm(self, path: str) -> None:
        """Write an 8-bit ASCII PGM image, linearly scaled so max -> 255."""
        peak = float(self.values.max())
        scale = 255.0 / peak if peak > 0 else 0.0
        pixels = np.rint(self.values * scale).astype(int)
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"P2\n{self.spec.size} {self.spec.size}\n255\n")
            for row in pixels:
                fh.write(" ".join(str(v) for v in row) + "\n")


@dataclass
class SparseDensityGrid(DensityGrid):
    """Density grid carrying bookkeeping from an expansion-based evaluation.

    ``center_indices[m]`` is the index (into the sample set used to build the
    grid) of the expansion center chosen for flat cell ``m``.  The two
    counters record how many expansions were built and how many cell
    evaluations were performed, for cost-model measurements.
    """

    center_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    n_expansion_builds: int = 0
    n_expansion_evaluations: int = 0

    def normalized(self) -> "SparseDensityGrid":
        base = super().normalized()
        return SparseDensityGrid(
            base.spec,
            base.values,
            center_indices=self.center_indices,
            n_expansion_builds=self.n_expansion_builds,
            n_expansion_evaluations=self.n_expansion_evaluations,
        )


def delta_grid(spec: GridSpec, point: np.ndarray) -> DensityGrid:
    """Unit mass concentrated in the single cell containing ``point``."""
    values = np.zeros((spec.size, spec.size))
    values[spec.cell_of(point)] = 1.0
    return DensityGrid(spec, values)


def total_variation(a: DensityGrid, b: DensityGrid) -> float:
    """Total variation distance between two grids on the same spec.

    Both inputs are normalized first, so the result lies in [0, 1].
    """
    if a.spec != b.spec:
        raise ValueError("grids must share a spec")
    pa = a.normalized().values
    pb = b.normalized().values
    return 0.5 * float(np.abs(pa - pb).sum())
