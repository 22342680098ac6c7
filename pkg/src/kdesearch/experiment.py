"""Cross-validation experiments, reports, and density benchmarks.

`cross_validate` runs the full protocol: a seed-stable partition into folds,
one learned model per (fold, method), one search episode per test image, and
aggregation over the union of all test splits.  Failed episodes enter the
median at the iteration cap, so "median iterations" is meaningful even when
many runs fail.  Raw per-episode records contain no timings and serialize
canonically, so identical inputs yield byte-identical raw files.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _backend
from .dataset import Dataset
from .grids import GridSpec
from .kernels import kde_grid, rule_of_thumb_bandwidth
from .multiindex import monomial_tables
from .multipole import multipole_grid
from .search import SearchConfig, run_episode
from .seeding import derived_rng, derived_seed
from .situation import learn_model

__all__ = [
    "MethodStats",
    "ExperimentReport",
    "cross_validate",
    "write_raw",
    "BenchResult",
    "bench_density",
]


@dataclass(frozen=True)
class MethodStats:
    method: str
    episodes: int
    median_iterations: float
    completion_pct: float
    per_fold: tuple[dict, ...]
    mean_cluster_size: Optional[float]
    wall_seconds: float


@dataclass
class ExperimentReport:
    folds: int
    seed: int
    n_images: int
    stats: dict[str, MethodStats]
    raw_records: list[dict] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"{self.n_images} images, {self.folds} folds, seed {self.seed}",
            "",
            f"{'method':<14} {'median':>8} {'completed':>10} {'cluster':>8} {'seconds':>8}",
        ]
        for m, s in self.stats.items():
            cluster = f"{s.mean_cluster_size:.1f}" if s.mean_cluster_size is not None else "-"
            lines.append(
                f"{m:<14} {s.median_iterations:>8.1f} {s.completion_pct:>9.1f}% "
                f"{cluster:>8} {s.wall_seconds:>8.1f}"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("method,statistic,value\n")
            for m, s in self.stats.items():
                fh.write(f"{m},episodes,{s.episodes}\n")
                fh.write(f"{m},median_iterations,{s.median_iterations:.17g}\n")
                fh.write(f"{m},completion_pct,{s.completion_pct:.17g}\n")
                if s.mean_cluster_size is not None:
                    fh.write(f"{m},mean_cluster_size,{s.mean_cluster_size:.17g}\n")
                fh.write(f"{m},wall_seconds,{s.wall_seconds:.17g}\n")
                for fold in s.per_fold:
                    fh.write(f"{m},fold{fold['fold']}_median,{fold['median']:.17g}\n")
                    fh.write(f"{m},fold{fold['fold']}_completion_pct,{fold['completion_pct']:.17g}\n")


def fold_partition(n: int, folds: int, master_seed: int) -> list[np.ndarray]:
    """Disjoint, exhaustive, seed-stable index split."""
    if folds < 2 or n < folds:
        raise ValueError("need folds >= 2 and at least one image per fold")
    perm = derived_rng(master_seed, "folds").permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def _episode_record(method: str, fold: int, result) -> dict:
    return {
        "method": method,
        "fold": fold,
        "image_id": result.image_id,
        "completed": result.completed,
        "iterations": result.iterations_to_completion,
        "localized_at": {c: result.localized_at[c] for c in sorted(result.localized_at)},
        "workspace_updates": result.n_workspace_updates,
        "conditioning_passes": result.n_conditioning_passes,
        "prior_fallbacks": result.n_prior_fallbacks,
    }


def cross_validate(
    dataset: Dataset,
    config: SearchConfig,
    methods: Sequence[str],
    folds: int = 10,
    master_seed: int = 0,
) -> ExperimentReport:
    """Evaluate each method over a shared fold partition of the dataset.

    Per-episode random streams are derived from (master seed, image id), so
    both the partition and every episode replay exactly.
    """
    parts = fold_partition(len(dataset.images), folds, master_seed)
    report = ExperimentReport(
        folds=folds, seed=master_seed, n_images=len(dataset.images), stats={}
    )

    per_method: dict[str, dict] = {
        m: {"iterations": [], "completed": [], "per_fold": [], "cluster_sizes": [], "wall": 0.0}
        for m in methods
    }
    for fold_idx, test_idx in enumerate(parts):
        test_mask = np.zeros(len(dataset.images), dtype=bool)
        test_mask[test_idx] = True
        train = [img for i, img in enumerate(dataset.images) if not test_mask[i]]
        test = [dataset.images[i] for i in test_idx]

        for method in methods:
            acc = per_method[method]
            started = time.perf_counter()
            model = learn_model(
                train,
                method,
                grid_size=config.grid_size,
                order=config.expansion_order,
                smooth_sigma_cells=config.smooth_sigma_cells,
                k_range=config.k_range,
                seed=derived_seed(master_seed, "learn", fold_idx, method),
            )
            fold_iters, fold_done = [], []
            for img in test:
                rng = derived_rng(master_seed, img.image_id)
                try:
                    result = run_episode(model, img, config, rng)
                except Exception as exc:
                    raise RuntimeError(
                        f"episode failed (fold {fold_idx}, image {img.image_id!r}, "
                        f"method {method})"
                    ) from exc
                fold_iters.append(result.iterations_to_completion)
                fold_done.append(result.completed)
                report.raw_records.append(_episode_record(method, fold_idx, result))
            acc["wall"] += time.perf_counter() - started
            acc["iterations"].extend(fold_iters)
            acc["completed"].extend(fold_done)
            if model.cluster_cache is not None:
                acc["cluster_sizes"].extend(model.cluster_cache.usage_sizes)
            acc["per_fold"].append(
                {
                    "fold": fold_idx,
                    "median": float(np.median(fold_iters)),
                    "completion_pct": 100.0 * float(np.mean(fold_done)),
                }
            )

    for method in methods:
        acc = per_method[method]
        sizes = acc["cluster_sizes"]
        report.stats[method] = MethodStats(
            method=method,
            episodes=len(acc["iterations"]),
            median_iterations=float(np.median(acc["iterations"])),
            completion_pct=100.0 * float(np.mean(acc["completed"])),
            per_fold=tuple(acc["per_fold"]),
            mean_cluster_size=float(np.mean(sizes)) if sizes else None,
            wall_seconds=acc["wall"],
        )
    return report


def write_raw(report: ExperimentReport, path: str) -> None:
    """Canonical JSON-lines dump of the per-episode records (no timings)."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in report.raw_records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


@dataclass(frozen=True)
class BenchResult:
    rows: tuple[dict, ...]
    fit: tuple[float, float, float, float]  # a, b, c, r_squared for eval time

    def to_text(self) -> str:
        header = (
            f"{'G':>4} {'M':>6} {'N':>5} {'brute ms':>9} {'build ms':>9} "
            f"{'eval ms':>8} {'total ms':>9} {'speedup':>8}"
        )
        lines = [f"backend: {_backend.backend_name()}", header]
        for r in self.rows:
            lines.append(
                f"{r['grid_size']:>4} {r['m']:>6} {r['n']:>5} {1e3 * r['brute_s']:>9.3f} "
                f"{1e3 * r['build_s']:>9.3f} {1e3 * r['eval_s']:>8.3f} "
                f"{1e3 * r['total_s']:>9.3f} {r['speedup']:>8.2f}"
            )
        a, b, c, r2 = self.fit
        lines.append(f"eval-time fit: {a:.3e} + {b:.3e}*M + {c:.3e}*N  (R^2 = {r2:.5f})")
        return "\n".join(lines) + "\n"


def _time_call(fn, repetitions: int, min_batch_s: float = 5e-3) -> float:
    """Best per-call time over ``repetitions`` batches.

    Each batch runs the call enough times to span ``min_batch_s``, so fast
    calls are not at the mercy of timer granularity and dispatch jitter.
    """
    t0 = time.perf_counter()
    fn()  # warm caches and allocator, and estimate the batch size
    once = time.perf_counter() - t0
    per_batch = max(1, int(np.ceil(min_batch_s / max(once, 1e-9))))
    best = np.inf
    for _ in range(repetitions):
        t0 = time.perf_counter()
        for _ in range(per_batch):
            fn()
        best = min(best, (time.perf_counter() - t0) / per_batch)
    return float(best)


def bench_density(
    grid_sizes: Sequence[int] = (32, 64, 128),
    cluster_sizes: Sequence[int] = (25, 100, 400),
    order: int = 4,
    repetitions: int = 3,
    seed: int = 0,
) -> BenchResult:
    """Brute-force versus expansion-based grid timings over a size sweep.

    Build (coefficient accumulation over distinct centers) and evaluation
    (per-cell series) phases are timed separately; the linear model
    ``eval_s ~ a + b*M + c*N`` quantifies how evaluation cost scales.
    """
    t = monomial_tables(2, order)
    rows = []
    for g in grid_sizes:
        spec = GridSpec(int(g))
        m = spec.size * spec.size
        for n in cluster_sizes:
            data_rng = derived_rng(seed, "bench-data", g, n)
            points = data_rng.random((int(n), 2))
            sigma = rule_of_thumb_bandwidth(points)
            weights = np.ones(int(n))

            brute_s = _time_call(lambda: kde_grid(points, weights, spec, sigma), repetitions)
            total_s = _time_call(
                lambda: multipole_grid(
                    points, weights, spec, sigma, order, derived_rng(seed, "bench-draws", g, n)
                ),
                repetitions,
            )

            # same center draws as multipole_grid, phases timed separately
            idx = derived_rng(seed, "bench-draws", g, n).integers(0, int(n), size=m)
            uniq, inverse = np.unique(idx, return_inverse=True)
            centers = points[uniq]
            build_s = _time_call(
                lambda: _backend.expansion_coefficients(
                    points, weights, centers, sigma, t.parents, t.pdims
                ),
                repetitions,
            )
            coeffs = _backend.expansion_coefficients(
                points, weights, centers, sigma, t.parents, t.pdims
            )
            probes = spec.probe_points()
            eval_s = _time_call(
                lambda: _backend.expansion_values(
                    coeffs, centers, inverse, probes, sigma,
                    t.invfact, t.parents, t.pdims, 1.0,
                ),
                repetitions,
            )
            rows.append(
                {
                    "grid_size": spec.size,
                    "m": m,
                    "n": int(n),
                    "brute_s": brute_s,
                    "build_s": build_s,
                    "eval_s": eval_s,
                    "total_s": total_s,
                    "speedup": brute_s / total_s,
                }
            )

    design = np.array([[1.0, r["m"], r["n"]] for r in rows])
    y = np.array([r["eval_s"] for r in rows])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    residual = y - design @ coef
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((residual**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return BenchResult(rows=tuple(rows), fit=(float(coef[0]), float(coef[1]), float(coef[2]), r2))
