"""Situation models: learned joint distributions over box locations and sizes.

A model fits, from training annotations, a multivariate Gaussian over the
normalized box centers of all categories (joint location), a Gaussian and
the raw data matrix over normalized box sizes (joint dimensions), and a
per-category size prior.  During a search episode the joints are conditioned
on the boxes currently in the workspace, which focuses the proposal
distributions of the categories still being sought.

Four method flags select how sizes are modeled:

* ``MultipoleIC``: expansion-based conditional KDE over the importance
  cluster of training images nearest the workspace's context feature;
* ``MultipoleNoIC``: same estimator over the entire training set;
* ``MVN``: Gaussian conditionals rasterized onto the grid;
* ``Uniform``: constant distributions throughout.

Location distributions are Gaussian conditionals for every method except
``Uniform``; location priors are uniform for all methods.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import linalg as sla
from scipy.stats import multivariate_normal

from .clustering import ClusterCache, extract_feature
from .errors import ConditioningError, DegenerateDataError, OutsideSupportError
from .grids import DensityGrid, GridSpec, delta_grid
from .kernels import rule_of_thumb_bandwidth
from .multipole import conditional_multipole_grid, gaussian_smooth, multipole_grid
from .seeding import derived_rng, derived_seed

__all__ = [
    "METHODS",
    "MvnModel",
    "LocationDistribution",
    "SituationModel",
    "ConditioningOutcome",
    "fit_mvn",
    "mvn_condition",
    "learn_model",
    "condition_size_distributions",
    "condition_location_distributions",
]

METHODS = ("MultipoleIC", "MultipoleNoIC", "MVN", "Uniform")

COVARIANCE_REGULARIZATION = 1e-6  # times trace/dim, added to the diagonal
MIN_TRAINING_IMAGES = 10


@dataclass(frozen=True)
class MvnModel:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def marginal(self, indices) -> "MvnModel":
        idx = np.asarray(indices, dtype=int)
        return MvnModel(self.mean[idx], self.covariance[np.ix_(idx, idx)])


def fit_mvn(data) -> MvnModel:
    """Sample mean and covariance with a small trace-scaled diagonal ridge."""
    x = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if x.shape[0] < 2:
        raise DegenerateDataError("need at least two rows to fit a Gaussian")
    mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    ridge = COVARIANCE_REGULARIZATION * np.trace(cov) / cov.shape[0]
    cov = cov + ridge * np.eye(cov.shape[0])
    return MvnModel(mean=mean, covariance=cov)


def mvn_condition(model: MvnModel, observed_indices, observed_values) -> MvnModel:
    """Gaussian conditional on a subset of coordinates, via Schur complement.

    The result is over the free coordinates in their original relative
    order.  A singular observed block raises :class:`ConditioningError`.
    """
    obs = np.asarray(observed_indices, dtype=int)
    vals = np.asarray(observed_values, dtype=np.float64)
    d = model.dim
    if obs.size == 0 or obs.size != vals.size:
        raise ValueError("observed indices and values must align and be non-empty")
    if np.unique(obs).size != obs.size or obs.min() < 0 or obs.max() >= d:
        raise ValueError("observed indices must be distinct and in range")
    if obs.size == d:
        raise ValueError("cannot condition on every coordinate")

    free = np.setdiff1d(np.arange(d), obs)
    s11 = model.covariance[np.ix_(free, free)]
    s12 = model.covariance[np.ix_(free, obs)]
    s22 = model.covariance[np.ix_(obs, obs)]
    rhs = np.column_stack([vals - model.mean[obs], s12.T])
    try:
        solved = sla.cho_solve(sla.cho_factor(s22, lower=True), rhs)
    except sla.LinAlgError as exc:
        raise ConditioningError("observed covariance block is singular") from exc
    mean = model.mean[free] + s12 @ solved[:, 0]
    cov = s11 - s12 @ solved[:, 1:]
    cov = 0.5 * (cov + cov.T)
    return MvnModel(mean=mean, covariance=cov)


@dataclass(frozen=True)
class LocationDistribution:
    """Per-category location law in normalized [0,1]^2 coordinates."""

    kind: str  # "uniform" or "mvn"
    mean: np.ndarray | None = None
    chol: np.ndarray | None = None
    covariance: np.ndarray | None = None

    def sample_normalized(self, rng: np.random.Generator) -> np.ndarray:
        """One draw, clipped into the unit square.

        Consumes two uniforms (uniform kind) or two standard normals (mvn).
        """
        if self.kind == "uniform":
            return rng.random(2)
        draw = self.mean + self.chol @ rng.standard_normal(2)
        return np.clip(draw, 0.0, 1.0)


UNIFORM_LOCATION = LocationDistribution(kind="uniform")


def _location_from_mvn(model: MvnModel) -> LocationDistribution:
    cov = 0.5 * (model.covariance + model.covariance.T)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("conditional location covariance not positive definite") from exc
    return LocationDistribution(kind="mvn", mean=model.mean, chol=chol, covariance=cov)


def _mvn_grid(model: MvnModel, spec: GridSpec) -> DensityGrid:
    pdf = multivariate_normal.pdf(
        spec.probe_points(), mean=model.mean, cov=model.covariance, allow_singular=True
    )
    grid = DensityGrid(spec, np.asarray(pdf).reshape(spec.size, spec.size))
    if grid.total_mass <= 0.0:
        raise OutsideSupportError("Gaussian mass lies entirely outside the grid")
    return grid.normalized()


def _uniform_grid(spec: GridSpec) -> DensityGrid:
    m = spec.size * spec.size
    return DensityGrid(spec, np.full((spec.size, spec.size), 1.0 / m))


@dataclass
class SituationModel:
    """Immutable after learning; the cluster cache only memoizes."""

    categories: tuple[str, ...]
    method: str
    images: tuple
    joint_location: MvnModel
    joint_dims_mvn: MvnModel
    joint_dims_data: np.ndarray
    size_priors: Mapping[str, DensityGrid]
    grid_spec: GridSpec
    order: int
    smooth_sigma_cells: float
    seed: int
    cluster_cache: ClusterCache | None = None

    def dim_columns(self, category: str) -> tuple[int, int]:
        i = self.categories.index(category)
        return 2 * i, 2 * i + 1


@dataclass(frozen=True)
class ConditioningOutcome:
    """Size grids for the requested categories, plus fallback bookkeeping."""

    size_grids: Mapping[str, DensityGrid]
    prior_fallbacks: tuple[str, ...] = ()


def _normalized_rows(images, categories, mode: str) -> np.ndarray:
    rows = []
    for img in images:
        vals = []
        for cat in categories:
            box = img.boxes[cat]
            if mode == "location":
                vals.extend([box.cx / img.width, box.cy / img.height])
            else:
                vals.extend([box.w / img.width, box.h / img.height])
        rows.append(vals)
    return np.asarray(rows, dtype=np.float64)


def learn_model(
    training,
    method: str,
    *,
    grid_size: int = 64,
    order: int = 4,
    smooth_sigma_cells: float = 1.5,
    k_range: tuple[int, int] = (2, 8),
    seed: int = 0,
) -> SituationModel:
    """Fit joints and size priors from training annotations.

    ``seed`` fixes the stochastic center draws of expansion-based priors and
    the k-means restarts, making the learned model reproducible.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    images = tuple(training)
    if len(images) < MIN_TRAINING_IMAGES:
        raise DegenerateDataError(f"need at least {MIN_TRAINING_IMAGES} training images")
    categories = tuple(sorted(images[0].boxes))
    for img in images:
        if tuple(sorted(img.boxes)) != categories:
            raise DegenerateDataError(f"image {img.image_id!r} has a different category set")

    spec = GridSpec(grid_size)
    loc_data = _normalized_rows(images, categories, "location")
    dims_data = _normalized_rows(images, categories, "dims")
    joint_location = fit_mvn(loc_data)
    joint_dims_mvn = fit_mvn(dims_data)

    size_priors: dict[str, DensityGrid] = {}
    for i, cat in enumerate(categories):
        cat_dims = dims_data[:, 2 * i : 2 * i + 2]
        if method == "Uniform":
            size_priors[cat] = _uniform_grid(spec)
        elif method == "MVN":
            try:
                size_priors[cat] = _mvn_grid(joint_dims_mvn.marginal([2 * i, 2 * i + 1]), spec)
            except OutsideSupportError:
                # near-constant dims underflow every cell; pin the prior instead
                size_priors[cat] = delta_grid(spec, cat_dims[0])
        else:
            try:
                sigma = rule_of_thumb_bandwidth(cat_dims)
            except DegenerateDataError:
                size_priors[cat] = delta_grid(spec, cat_dims[0])
                continue
            raw = multipole_grid(
                cat_dims, None, spec, sigma, order, derived_rng(seed, "size-prior", cat)
            )
            if raw.total_mass <= 0.0:
                size_priors[cat] = delta_grid(spec, cat_dims[0])
            else:
                size_priors[cat] = gaussian_smooth(raw, smooth_sigma_cells)

    cache = None
    if method == "MultipoleIC":
        def feature_fn(localized: tuple[str, ...]) -> np.ndarray:
            return np.array([extract_feature(img, localized).values for img in images])

        cache = ClusterCache(
            feature_fn=feature_fn, seed=derived_seed(seed, "clusters"), k_range=k_range
        )

    return SituationModel(
        categories=categories,
        method=method,
        images=images,
        joint_location=joint_location,
        joint_dims_mvn=joint_dims_mvn,
        joint_dims_data=dims_data,
        size_priors=size_priors,
        grid_spec=spec,
        order=order,
        smooth_sigma_cells=smooth_sigma_cells,
        seed=seed,
        cluster_cache=cache,
    )


def _workspace_targets(model: SituationModel, workspace) -> list[str]:
    # categories still being sought: no proposal yet, or only a provisional one
    finals = {
        c for c, p in workspace.proposals.items() if p.status == "final"
    }
    return [c for c in model.categories if c not in finals]


def _detected(model: SituationModel, workspace) -> list[str]:
    return [c for c in model.categories if c in workspace.proposals]


def _normalized_dims_of(workspace, category: str) -> tuple[float, float]:
    box = workspace.proposals[category].box
    return box.w / workspace.width, box.h / workspace.height


def _normalized_center_of(workspace, category: str) -> tuple[float, float]:
    box = workspace.proposals[category].box
    return box.cx / workspace.width, box.cy / workspace.height


def condition_size_distributions(
    model: SituationModel, workspace, rng: np.random.Generator
) -> ConditioningOutcome:
    """Size grids for every category not yet finally localized.

    Each target category is conditioned on the boxes of the *other* detected
    categories (conditioning a size on its own provisional value would pin a
    Gaussian conditional to a point).  Estimator failures fall back to the
    category's prior and are reported in the outcome.
    """
    targets = _workspace_targets(model, workspace)
    detected = _detected(model, workspace)
    grids: dict[str, DensityGrid] = {}
    fallbacks: list[str] = []
    if not targets:
        return ConditioningOutcome(size_grids=grids)

    cluster = None
    if model.method == "MultipoleIC" and detected:
        feature = extract_feature(workspace, detected)
        cluster = model.cluster_cache.importance_for(tuple(detected), feature)

    for cat in targets:
        others = [d for d in detected if d != cat]
        if not others or model.method == "Uniform":
            grids[cat] = model.size_priors[cat]
            continue

        if model.method == "MVN":
            obs_idx = [i for o in others for i in model.dim_columns(o)]
            obs_vals = [v for o in others for v in _normalized_dims_of(workspace, o)]
            try:
                conditional = mvn_condition(model.joint_dims_mvn, obs_idx, obs_vals)
                free = [d for d in range(2 * len(model.categories)) if d not in obs_idx]
                c0, c1 = model.dim_columns(cat)
                grids[cat] = _mvn_grid(
                    conditional.marginal([free.index(c0), free.index(c1)]), model.grid_spec
                )
            except (ConditioningError, OutsideSupportError):
                grids[cat] = model.size_priors[cat]
                fallbacks.append(cat)
            continue

        # expansion-based KDE paths
        if model.method == "MultipoleIC":
            members = cluster.member_indices
            weights = cluster.weights
        else:
            members = np.arange(model.joint_dims_data.shape[0])
            weights = None
        c0, c1 = model.dim_columns(cat)
        obs_cols = [i for o in others for i in model.dim_columns(o)]
        joint = model.joint_dims_data[np.ix_(members, [c0, c1, *obs_cols])]
        y_obs = np.array([v for o in others for v in _normalized_dims_of(workspace, o)])
        try:
            if joint.shape[0] < 2:
                raise DegenerateDataError("too few cluster members for a bandwidth")
            sigma = rule_of_thumb_bandwidth(joint)
            raw = conditional_multipole_grid(
                joint, weights, y_obs, model.grid_spec, sigma, model.order, rng
            )
            grids[cat] = gaussian_smooth(raw, model.smooth_sigma_cells)
        except (DegenerateDataError, OutsideSupportError):
            grids[cat] = model.size_priors[cat]
            fallbacks.append(cat)

    return ConditioningOutcome(size_grids=grids, prior_fallbacks=tuple(fallbacks))


def condition_location_distributions(model: SituationModel, workspace) -> dict[str, LocationDistribution]:
    """Location law per unfinalized category: Gaussian conditional or uniform.

    Uniform methods and categories with no other detections keep the uniform
    prior; conditioning failures also fall back to uniform.
    """
    targets = _workspace_targets(model, workspace)
    detected = _detected(model, workspace)
    out: dict[str, LocationDistribution] = {}
    for cat in targets:
        others = [d for d in detected if d != cat]
        if model.method == "Uniform" or not others:
            out[cat] = UNIFORM_LOCATION
            continue
        obs_idx = [i for o in others for i in model.dim_columns(o)]
        obs_vals = [v for o in others for v in _normalized_center_of(workspace, o)]
        try:
            conditional = mvn_condition(model.joint_location, obs_idx, obs_vals)
            free = [d for d in range(2 * len(model.categories)) if d not in obs_idx]
            c0, c1 = model.dim_columns(cat)
            out[cat] = _location_from_mvn(
                conditional.marginal([free.index(c0), free.index(c1)])
            )
        except ConditioningError:
            out[cat] = UNIFORM_LOCATION
    return out
