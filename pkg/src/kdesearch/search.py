"""Active localization episodes driven by an IOU oracle.

Each iteration picks a category that is not yet finally localized, samples a
box proposal from that category's current location and size distributions,
and scores it against ground truth.  Scores at or above the final threshold
lock the category; scores at or above the provisional threshold enter the
workspace if they beat the incumbent.  Any workspace change triggers one
re-conditioning pass of the remaining categories' distributions, so each
accepted proposal immediately steers the rest of the search.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import BoundingBox, iou
from .grids import DensityGrid
from .situation import (
    LocationDistribution,
    SituationModel,
    UNIFORM_LOCATION,
    condition_location_distributions,
    condition_size_distributions,
)

__all__ = [
    "ObjectProposal",
    "Workspace",
    "SearchConfig",
    "EpisodeResult",
    "iou",
    "oracle_score",
    "sample_proposal",
    "run_episode",
]

FINAL = "final"
PROVISIONAL = "provisional"


@dataclass(frozen=True)
class ObjectProposal:
    category: str
    box: BoundingBox
    score: Optional[float] = None
    status: Optional[str] = None


@dataclass
class Workspace:
    """Mutable search state: at most one proposal per category, plus the
    current per-category location and size distributions."""

    width: float
    height: float
    proposals: dict[str, ObjectProposal] = field(default_factory=dict)
    location_dists: dict[str, LocationDistribution] = field(default_factory=dict)
    size_grids: dict[str, DensityGrid] = field(default_factory=dict)


@dataclass(frozen=True)
class SearchConfig:
    """Episode parameters.

    ``final_threshold`` may exceed 1 to express an unattainable goal (every
    episode then runs to ``max_iterations``), and the trivial threshold 0
    finalizes any proposal; hence only ordering is validated.
    """

    provisional_threshold: float = 0.25
    final_threshold: float = 0.5
    max_iterations: int = 1000
    grid_size: int = 64
    expansion_order: int = 4
    smooth_sigma_cells: float = 1.5
    method: str = "MultipoleIC"
    seed: int = 0
    k_min: int = 2
    k_max: int = 8

    def __post_init__(self) -> None:
        if not 0.0 <= self.provisional_threshold <= self.final_threshold:
            raise ValueError("need 0 <= provisional_threshold <= final_threshold")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.grid_size < 1 or self.expansion_order < 0:
            raise ValueError("grid_size must be >= 1 and expansion_order >= 0")

    @property
    def k_range(self) -> tuple[int, int]:
        return (self.k_min, self.k_max)


@dataclass
class EpisodeResult:
    image_id: str
    completed: bool
    iterations_to_completion: int
    localized_at: dict[str, Optional[int]]
    trace: list[dict]
    n_conditioning_passes: int = 0
    n_workspace_updates: int = 0
    n_prior_fallbacks: int = 0


def oracle_score(proposal: ObjectProposal, truth) -> float:
    """IOU of the proposal with the ground-truth box of its category."""
    box = truth.boxes.get(proposal.category)
    if box is None:
        raise ValueError(f"truth has no category {proposal.category!r}")
    return iou(proposal.box, box)


def sample_proposal(
    category: str,
    location_dist: LocationDistribution,
    size_grid: DensityGrid,
    width: float,
    height: float,
    rng: np.random.Generator,
) -> ObjectProposal:
    """Draw one unscored proposal.

    The center comes from the location law (clamped into the image); the
    size comes from a grid cell drawn proportionally to its mass, jittered
    uniformly inside the cell, scaled to pixels, and clamped to
    [1, 1.5 * image side].  Draw order is fixed: location, then cell, then
    the two jitters.
    """
    loc = location_dist.sample_normalized(rng)
    i, j = size_grid.sample_cell(rng)
    spec = size_grid.spec
    w_norm = spec.lo + (i + rng.random()) * spec.cell_width
    h_norm = spec.lo + (j + rng.random()) * spec.cell_width
    box = BoundingBox(
        cx=loc[0] * width,
        cy=loc[1] * height,
        w=float(np.clip(w_norm * width, 1.0, 1.5 * width)),
        h=float(np.clip(h_norm * height, 1.0, 1.5 * height)),
    )
    return ObjectProposal(category=category, box=box)


def _recondition(model: SituationModel, ws: Workspace, rng: np.random.Generator) -> int:
    """One conditioning pass over all unfinalized categories.

    Returns the number of categories that fell back to their priors.
    """
    outcome = condition_size_distributions(model, ws, rng)
    ws.size_grids.update(outcome.size_grids)
    ws.location_dists.update(condition_location_distributions(model, ws))
    return len(outcome.prior_fallbacks)


def run_episode(
    model: SituationModel, truth, config: SearchConfig, rng: np.random.Generator
) -> EpisodeResult:
    """Search one image until every category is final or the budget runs out."""
    ws = Workspace(width=float(truth.width), height=float(truth.height))
    for cat in model.categories:
        ws.location_dists[cat] = UNIFORM_LOCATION
        ws.size_grids[cat] = model.size_priors[cat]

    localized_at: dict[str, Optional[int]] = {c: None for c in model.categories}
    trace: list[dict] = []
    result = EpisodeResult(
        image_id=truth.image_id,
        completed=False,
        iterations_to_completion=config.max_iterations,
        localized_at=localized_at,
        trace=trace,
    )

    remaining = list(model.categories)
    for iteration in range(1, config.max_iterations + 1):
        cat = remaining[rng.integers(len(remaining))]
        proposal = sample_proposal(
            cat, ws.location_dists[cat], ws.size_grids[cat], ws.width, ws.height, rng
        )
        score = oracle_score(proposal, truth)

        accepted = None
        if score >= config.final_threshold:
            accepted = FINAL
        elif score >= config.provisional_threshold:
            incumbent = ws.proposals.get(cat)
            if incumbent is None or score > incumbent.score:
                accepted = PROVISIONAL

        updated = accepted is not None
        fallbacks = 0
        if updated:
            ws.proposals[cat] = ObjectProposal(cat, proposal.box, score, accepted)
            if accepted == FINAL:
                remaining.remove(cat)
                localized_at[cat] = iteration
            result.n_workspace_updates += 1
            fallbacks = _recondition(model, ws, rng)
            result.n_conditioning_passes += 1
            result.n_prior_fallbacks += fallbacks

        trace.append(
            {
                "iteration": iteration,
                "category": cat,
                "box": {
                    "cx": proposal.box.cx,
                    "cy": proposal.box.cy,
                    "w": proposal.box.w,
                    "h": proposal.box.h,
                },
                "score": score,
                "accepted": accepted,
                "workspace_updated": updated,
                "prior_fallbacks": fallbacks,
            }
        )

        if not remaining:
            result.completed = True
            result.iterations_to_completion = iteration
            break

    return result
