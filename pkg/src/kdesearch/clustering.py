"""Importance clustering of training images by scene-context features.

A test image whose localized objects resemble some subset of the training
images should borrow density estimates mostly from that subset.  The context
feature of an image, given the set of currently localized categories, is the
normalized size of each such category's box plus the normalized distance
between each pair of their centers.  Training features are k-means
clustered (k picked by the variance-ratio criterion), the test feature
selects its nearest cluster, and members are weighted by a Gaussian
similarity in feature space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateDataError
from .seeding import derived_rng

__all__ = [
    "ContextFeature",
    "ClusterModel",
    "ImportanceCluster",
    "ClusterCache",
    "extract_feature",
    "kmeans",
    "calinski_harabasz",
    "select_model",
    "importance_cluster",
]

MAX_LLOYD_ITERATIONS = 100
RESTARTS_PER_K = 3
WEIGHT_BANDWIDTH_FLOOR = 1e-6


@dataclass(frozen=True)
class ContextFeature:
    """Feature vector for one image under one set of localized categories.

    ``values`` holds one normalized box size (area / image area) per
    localized category, in the order given, followed by one normalized
    center distance (euclidean / image diagonal) per category pair in
    combination order.
    """

    localized: tuple[str, ...]
    values: np.ndarray


@dataclass(frozen=True)
class ClusterModel:
    k: int
    centroids: np.ndarray
    assignment: np.ndarray
    wss: float
    ch_score: float


@dataclass(frozen=True)
class ImportanceCluster:
    """Training subset nearest the test image in context-feature space."""

    member_indices: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return int(self.member_indices.shape[0])


def _box_of(source, category: str):
    # training images carry ground-truth boxes; workspaces carry proposals
    boxes = getattr(source, "boxes", None)
    if boxes is not None and category in boxes:
        return boxes[category]
    proposals = getattr(source, "proposals", None)
    if proposals is not None and category in proposals:
        return proposals[category].box
    raise ValueError(f"no box available for category {category!r}")


def extract_feature(source, localized) -> ContextFeature:
    """Context feature of an image or workspace for the localized set.

    The result is invariant under uniform rescaling of the image and all
    its boxes.
    """
    localized = tuple(localized)
    if not localized:
        raise ValueError("localized set must be non-empty")
    width = float(source.width)
    height = float(source.height)
    area = width * height
    diag = math.hypot(width, height)
    chosen = [_box_of(source, c) for c in localized]

    values = [b.w * b.h / area for b in chosen]
    for i in range(len(chosen)):
        for j in range(i + 1, len(chosen)):
            a, b = chosen[i], chosen[j]
            values.append(math.hypot(a.cx - b.cx, a.cy - b.cy) / diag)
    return ContextFeature(localized=localized, values=np.asarray(values, dtype=np.float64))


def _nearest(data: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = ((data[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def _plusplus_init(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = data.shape[0]
    centroids = np.empty((k, data.shape[1]))
    centroids[0] = data[rng.integers(n)]
    d2 = ((data - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centroids[c] = data[rng.integers(n)]
            continue
        centroids[c] = data[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((data - centroids[c]) ** 2).sum(axis=1))
    return centroids


def kmeans(data, k: int, rng: np.random.Generator) -> ClusterModel:
    """Lloyd iterations from a k-means++ start, to an assignment fixpoint.

    Empty clusters are reseeded with the point farthest from its assigned
    centroid, so the returned model always has k non-empty clusters.
    """
    x = np.atleast_2d(np.asarray(data, dtype=np.float64))
    n = x.shape[0]
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise ValueError("need at least k points")
    if np.unique(x, axis=0).shape[0] < k:
        raise DegenerateDataError("fewer distinct points than clusters")

    centroids = _plusplus_init(x, k, rng)
    assignment = _nearest(x, centroids)
    for _ in range(MAX_LLOYD_ITERATIONS):
        for c in range(k):
            members = assignment == c
            if members.any():
                centroids[c] = x[members].mean(axis=0)
            else:
                dist_own = ((x - centroids[assignment]) ** 2).sum(axis=1)
                far = int(np.argmax(dist_own))
                centroids[c] = x[far]
                assignment[far] = c
        new_assignment = _nearest(x, centroids)
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment

    wss = float(((x - centroids[assignment]) ** 2).sum())
    model = ClusterModel(k=k, centroids=centroids, assignment=assignment, wss=wss, ch_score=math.nan)
    return replace(model, ch_score=calinski_harabasz(x, model))


def calinski_harabasz(data, model: ClusterModel) -> float:
    """Variance-ratio criterion (BSS/(k-1)) / (WSS/(n-k)).

    Returns +inf when the clustering is perfect (WSS == 0).
    """
    x = np.atleast_2d(np.asarray(data, dtype=np.float64))
    n, k = x.shape[0], model.k
    if k < 2:
        raise ValueError("k must be at least 2")
    if n <= k:
        raise ValueError("need more points than clusters")
    mu = x.mean(axis=0)
    wss = 0.0
    bss = 0.0
    for c in range(k):
        members = x[model.assignment == c]
        mc = members.mean(axis=0)
        wss += float(((members - mc) ** 2).sum())
        bss += members.shape[0] * float(((mc - mu) ** 2).sum())
    if wss == 0.0:
        return math.inf
    return (bss / (k - 1)) / (wss / (n - k))


def select_model(data, k_range: tuple[int, int], rng: np.random.Generator) -> ClusterModel:
    """Best-scoring clustering over a k interval, 3 restarts per k.

    Restart streams are spawned from ``rng`` in (k, restart) order, so the
    choice is reproducible.  Ties on the score go to the smaller k.
    """
    x = np.atleast_2d(np.asarray(data, dtype=np.float64))
    n = x.shape[0]
    lo, hi = int(k_range[0]), int(k_range[1])
    if lo < 2 or hi > n // 2 or lo > hi:
        raise ValueError(f"k_range must lie within [2, {n // 2}]")

    ks = range(lo, hi + 1)
    streams = rng.spawn(len(ks) * RESTARTS_PER_K)
    best: ClusterModel | None = None
    for i, k in enumerate(ks):
        kbest: ClusterModel | None = None
        for r in range(RESTARTS_PER_K):
            model = kmeans(x, k, streams[i * RESTARTS_PER_K + r])
            if kbest is None or model.wss < kbest.wss:
                kbest = model
        if best is None or kbest.ch_score > best.ch_score:
            best = kbest
    return best


def importance_cluster(
    model: ClusterModel, training_features, test_feature: ContextFeature | np.ndarray
) -> ImportanceCluster:
    """Members of the cluster nearest the test feature, similarity-weighted.

    Weights are ``exp(-dist^2 / (2 h^2))`` normalized to sum 1, where ``h``
    is the lower median of the member-to-test distances (floored at 1e-6),
    so a member at exactly the median distance always gets weight factor
    ``exp(-1/2)``.
    """
    f = test_feature.values if isinstance(test_feature, ContextFeature) else test_feature
    f = np.asarray(f, dtype=np.float64)
    x = np.atleast_2d(np.asarray(training_features, dtype=np.float64))
    if f.shape[0] != model.centroids.shape[1]:
        raise ValueError("test feature length must match the centroids")

    nearest = int(np.argmin(((model.centroids - f) ** 2).sum(axis=1)))
    members = np.flatnonzero(model.assignment == nearest)
    dists = np.sqrt(((x[members] - f) ** 2).sum(axis=1))
    h = max(float(np.sort(dists)[(dists.shape[0] - 1) // 2]), WEIGHT_BANDWIDTH_FLOOR)
    w = np.exp(-0.5 * (dists / h) ** 2)
    return ImportanceCluster(member_indices=members, weights=w / w.sum())


@dataclass
class ClusterCache:
    """Memoized clustering per localized-category set.

    Model selection runs once per localized set (features supplied by
    ``feature_fn``), with the k-means stream derived from ``seed`` and the
    set itself so cache order never changes results.  Importance clusters
    are further memoized on the test feature rounded to 1e-3.  Every lookup
    records the returned cluster size in ``usage_sizes`` for reporting.
    """

    feature_fn: object
    seed: int
    k_range: tuple[int, int] = (2, 8)
    usage_sizes: list = field(default_factory=list)
    _models: dict = field(default_factory=dict)
    _clusters: dict = field(default_factory=dict)

    def model_for(self, localized: tuple[str, ...]) -> tuple[np.ndarray, ClusterModel]:
        entry = self._models.get(localized)
        if entry is None:
            features = np.atleast_2d(np.asarray(self.feature_fn(localized), dtype=np.float64))
            rng = derived_rng(self.seed, "kmeans", *localized)
            entry = (features, select_model(features, self.k_range, rng))
            self._models[localized] = entry
        return entry

    def importance_for(self, localized: tuple[str, ...], test_feature) -> ImportanceCluster:
        f = test_feature.values if isinstance(test_feature, ContextFeature) else test_feature
        f = np.asarray(f, dtype=np.float64)
        key = (localized, tuple(np.round(f / 1e-3).astype(np.int64).tolist()))
        cluster = self._clusters.get(key)
        if cluster is None:
            features, model = self.model_for(localized)
            cluster = importance_cluster(model, features, f)
            self._clusters[key] = cluster
        self.usage_sizes.append(cluster.size)
        return cluster
