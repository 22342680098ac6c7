"""Shared dataset builders and independent reference estimators.

The reference estimators here deliberately avoid every package internal
beyond the plain data containers, so the tests compare the fast paths
against straightforward NumPy/math implementations.
"""
import math

import numpy as np
from numpy.random import default_rng

from kdesearch.dataset import Dataset, SituationImage
from kdesearch.geometry import BoundingBox
from kdesearch.grids import DensityGrid


def brute_kde_grid(points, weights, spec, sigma):
    """Direct double-loop kernel sum over cell centers, normalized."""
    pts = np.asarray(points, dtype=float)
    n, d = pts.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    centers = spec.centers_1d()
    norm = (2.0 * math.pi) ** (-d / 2.0)
    vals = np.zeros((spec.size, spec.size))
    for i in range(spec.size):
        for j in range(spec.size):
            acc = 0.0
            for k in range(n):
                q = ((centers[i] - pts[k, 0]) ** 2 + (centers[j] - pts[k, 1]) ** 2) / sigma**2
                acc += w[k] * math.exp(-0.5 * q)
            vals[i, j] = acc * norm
    return DensityGrid(spec, vals / vals.sum())


def brute_conditional_grid(joint, weights, y_obs, spec, sigma):
    """Vectorized conditional kernel estimate on the grid, normalized.

    ``joint`` holds the two target columns first, then the observed columns.
    """
    joint = np.asarray(joint, dtype=float)
    y_obs = np.asarray(y_obs, dtype=float)
    probes = spec.probe_points()
    z = joint[:, :2]
    y = joint[:, 2:]
    w = np.ones(joint.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    dz2 = ((probes[:, None, :] - z[None, :, :]) ** 2).sum(axis=2)
    dy2 = ((y_obs[None, :] - y) ** 2).sum(axis=1)
    num = (w[None, :] * np.exp(-0.5 * (dz2 + dy2[None, :]) / sigma**2)).sum(axis=1)
    vals = num.reshape(spec.size, spec.size)
    return DensityGrid(spec, vals / vals.sum())


def regime_dataset(n=60, seed=0):
    """Dog size bimodal; the regime shows only in the walker-leash distance.

    Walker and leash sizes carry tiny regime-independent jitter, so a joint
    Gaussian over sizes alone cannot resolve which dog mode an image is in,
    while the pairwise-distance context feature separates the regimes
    cleanly.
    """
    rng = default_rng(seed)
    images = []
    for i in range(n):
        r = int(rng.random() < 0.5)
        jit = lambda s: float(rng.normal(0.0, s))
        walker = BoundingBox(400.0 + jit(15), 375.0 + jit(15), 140.0 + jit(4), 390.0 + jit(4))
        d = (150.0 if r == 0 else 450.0) + jit(20)
        leash = BoundingBox(walker.cx + d, 375.0 + jit(15), 200.0 + jit(4), 150.0 + jit(4))
        if r == 0:
            dog = BoundingBox(walker.cx + d + jit(30), 500.0 + jit(15), 120.0 + jit(5), 260.0 + jit(5))
        else:
            dog = BoundingBox(walker.cx + d + jit(30), 500.0 + jit(15), 260.0 + jit(5), 120.0 + jit(5))
        images.append(
            SituationImage(
                image_id=f"regime-{i:03d}",
                width=1000,
                height=750,
                boxes={"dog": dog, "dog-walker": walker, "leash": leash},
            )
        )
    return Dataset(images=tuple(images), categories=("dog", "dog-walker", "leash"), provenance={"kind": "test"})


def vacuous_dataset(n=60, seed=0):
    """Constant walker/leash sizes and a near-point dog size mode.

    Conditioning dog size on the other sizes is exactly vacuous, and the dog
    mode sits on a 64-grid cell center, so its argmax cell is insensitive to
    bandwidth pooling.
    """
    rng = default_rng(seed)
    images = []
    for i in range(n):
        jp = lambda: float(rng.uniform(-40, 40))
        dog = BoundingBox(
            500.0 + jp(),
            400.0 + jp(),
            148.4375 + float(rng.normal(0, 1.5)),
            205.078125 + float(rng.normal(0, 1.5)),
        )
        walker = BoundingBox(300.0 + jp(), 350.0 + jp(), 140.0, 390.0)
        leash = BoundingBox(420.0 + jp(), 380.0 + jp(), 200.0, 150.0)
        images.append(
            SituationImage(
                image_id=f"vac-{i:03d}",
                width=1000,
                height=750,
                boxes={"dog": dog, "dog-walker": walker, "leash": leash},
            )
        )
    return Dataset(images=tuple(images), categories=("dog", "dog-walker", "leash"), provenance={"kind": "test"})
