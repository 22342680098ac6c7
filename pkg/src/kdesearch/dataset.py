"""Annotation datasets: JSON-lines ingestion, canonical export, synthesis.

A dataset is a list of images, each carrying exactly one ground-truth box
per category.  The interchange format is one JSON object per line:

    {"image_id": "...", "width": 1000, "height": 750,
     "objects": {"dog": {"cx": ..., "cy": ..., "w": ..., "h": ...}, ...}}

The synthetic generator produces dog-walking scenes with two depth regimes
(close-up and far).  Box sizes, the dog/walker size ratio, and the dog's
aspect ratio all depend on the regime, so the pooled size distributions are
bimodal and the cross-category size relation is not captured well by a
single Gaussian; conditional KDE methods can exploit it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from typing import Mapping

import numpy as np

from .errors import DataFormatError
from .geometry import BoundingBox

__all__ = [
    "SituationImage",
    "Dataset",
    "SyntheticParams",
    "load_annotations",
    "save_annotations",
    "generate_synthetic",
]

CATEGORIES = ("dog", "dog-walker", "leash")


@dataclass(frozen=True)
class SituationImage:
    image_id: str
    width: int
    height: int
    boxes: Mapping[str, BoundingBox]


@dataclass(frozen=True)
class Dataset:
    images: tuple[SituationImage, ...]
    categories: tuple[str, ...]
    provenance: Mapping[str, object]

    def __len__(self) -> int:
        return len(self.images)

    def image(self, image_id: str) -> SituationImage:
        for img in self.images:
            if img.image_id == image_id:
                return img
        raise KeyError(f"no image {image_id!r} in dataset")


def _require(condition: bool, line_no: int, message: str) -> None:
    if not condition:
        raise DataFormatError(f"line {line_no}: {message}")


def _parse_box(raw: dict, line_no: int, category: str) -> BoundingBox:
    _require(isinstance(raw, dict), line_no, f"box for {category!r} must be an object")
    vals = {}
    for key in ("cx", "cy", "w", "h"):
        _require(key in raw, line_no, f"box for {category!r} missing field {key!r}")
        v = raw[key]
        _require(
            isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v),
            line_no,
            f"box field {key!r} for {category!r} must be a finite number",
        )
        vals[key] = float(v)
    _require(vals["w"] > 0 and vals["h"] > 0, line_no, f"box for {category!r} needs positive sides")
    return BoundingBox(**vals)


def load_annotations(path: str) -> Dataset:
    """Parse and validate a JSON-lines annotation file.

    Errors carry the offending line number; category-set mismatches and
    duplicate ids name the image.
    """
    images: list[SituationImage] = []
    seen: set[str] = set()
    categories: tuple[str, ...] | None = None

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            _require(isinstance(rec, dict), line_no, "record must be a JSON object")
            for key in ("image_id", "width", "height", "objects"):
                _require(key in rec, line_no, f"record missing field {key!r}")
            image_id = rec["image_id"]
            _require(isinstance(image_id, str) and image_id, line_no, "image_id must be a non-empty string")
            _require(image_id not in seen, line_no, f"duplicate image_id {image_id!r}")
            seen.add(image_id)
            for key in ("width", "height"):
                v = rec[key]
                _require(
                    isinstance(v, int) and not isinstance(v, bool) and v > 0,
                    line_no,
                    f"{key} must be a positive integer",
                )
            objects = rec["objects"]
            _require(isinstance(objects, dict) and objects, line_no, "objects must be a non-empty map")

            cats = tuple(sorted(objects))
            if categories is None:
                categories = cats
            else:
                _require(
                    cats == categories,
                    line_no,
                    f"image {image_id!r} categories {cats} differ from {categories}",
                )
            boxes = {c: _parse_box(objects[c], line_no, c) for c in cats}
            images.append(
                SituationImage(image_id=image_id, width=rec["width"], height=rec["height"], boxes=boxes)
            )

    if not images:
        raise DataFormatError("empty dataset")
    return Dataset(
        images=tuple(images),
        categories=categories,
        provenance={"kind": "ingested", "path": str(path)},
    )


def save_annotations(dataset: Dataset, path: str) -> None:
    """Write the canonical JSON-lines form (fixed key order, float boxes).

    Loading a file produced here and saving it again is byte-identical.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for img in dataset.images:
            rec = {
                "image_id": img.image_id,
                "width": img.width,
                "height": img.height,
                "objects": {
                    c: {"cx": b.cx, "cy": b.cy, "w": b.w, "h": b.h}
                    for c, b in sorted(img.boxes.items())
                },
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


@dataclass(frozen=True)
class SyntheticParams:
    """Two-regime dog-walking scene generator parameters.

    Tuple-valued fields hold (close-up, far) values.  Close-up scenes have
    large walkers and compact sitting-style dog boxes; far scenes have small
    walkers and wide trotting-style dog boxes, placing the two regimes on
    different branches of the size relation.  A second latent factor, leash
    slack, scales the walker-to-dog offset and hence the leash box; it is
    independent of depth, so the leash size stays bimodal even conditioned
    on the other boxes, though the detected geometry reveals it.
    """

    width: int = 1000
    height: int = 750
    mixture_weight: float = 0.5  # probability of the close-up regime
    walker_height_frac: tuple[float, float] = (0.52, 0.30)
    walker_height_sd: tuple[float, float] = (0.035, 0.025)
    walker_aspect: float = 0.36
    walker_aspect_sd: float = 0.03
    walker_cy_frac: tuple[float, float] = (0.54, 0.44)
    walker_cy_sd: float = 0.04
    dog_height_ratio: tuple[float, float] = (0.42, 0.62)
    dog_height_ratio_sd: tuple[float, float] = (0.04, 0.045)
    dog_aspect: tuple[float, float] = (0.72, 1.65)
    dog_aspect_sd: tuple[float, float] = (0.05, 0.08)
    dog_dx_frac: tuple[float, float] = (0.26, 0.16)
    dog_dx_sd: tuple[float, float] = (0.04, 0.03)
    dog_dy_frac: tuple[float, float] = (0.16, 0.08)
    dog_dy_sd: tuple[float, float] = (0.035, 0.025)
    # taut versus slack leash: multiplies the walker-to-dog offset means
    offset_extension: tuple[float, float] = (0.70, 1.90)
    extension_weight: float = 0.5  # probability of the taut (short) leash
    leash_pad_frac: float = 0.02
    # annotation slop on the leash box edges, as a fraction of min(W, H);
    # without it the leash center would determine the dog center exactly and
    # learned location conditionals would collapse to near-zero variance
    leash_jitter_frac: float = 0.025

    def __post_init__(self) -> None:
        if not 0.0 < self.mixture_weight <= 1.0:
            raise ValueError("mixture_weight must lie in (0, 1]")
        if self.width < 10 or self.height < 10:
            raise ValueError("image dimensions too small")

    @classmethod
    def from_file(cls, path: str) -> "SyntheticParams":
        """Read overrides from flat ``key = value`` lines (# comments)."""
        params = cls()
        known = {f.name: f for f in fields(cls)}
        overrides: dict[str, object] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                if "=" not in text:
                    raise DataFormatError(f"line {line_no}: expected key = value")
                key, _, value = text.partition("=")
                key, value = key.strip(), value.strip()
                if key not in known:
                    raise DataFormatError(f"line {line_no}: unknown parameter {key!r}")
                current = getattr(params, key)
                try:
                    if isinstance(current, tuple):
                        parts = [float(p) for p in value.split(",")]
                        if len(parts) != len(current):
                            raise ValueError
                        overrides[key] = tuple(parts)
                    elif isinstance(current, int):
                        overrides[key] = int(value)
                    else:
                        overrides[key] = float(value)
                except ValueError as exc:
                    raise DataFormatError(f"line {line_no}: bad value for {key!r}") from exc
        return replace(params, **overrides)


def _clamped_box(cx: float, cy: float, w: float, h: float, width: int, height: int) -> BoundingBox:
    w = float(np.clip(w, 2.0, width))
    h = float(np.clip(h, 2.0, height))
    cx = float(np.clip(cx, 0.5 * w, width - 0.5 * w))
    cy = float(np.clip(cy, 0.5 * h, height - 0.5 * h))
    return BoundingBox(cx=cx, cy=cy, w=w, h=h)


def generate_synthetic(params: SyntheticParams, n: int, rng: np.random.Generator) -> Dataset:
    """Draw ``n`` scenes; the per-image draw sequence is fixed, so output is
    reproducible for a given generator state regardless of parameters."""
    if n < 1:
        raise ValueError("n must be at least 1")
    w_img, h_img = params.width, params.height
    images = []
    for i in range(n):
        r = 0 if rng.random() < params.mixture_weight else 1

        walker_h = rng.normal(params.walker_height_frac[r], params.walker_height_sd[r]) * h_img
        walker_w = walker_h * rng.normal(params.walker_aspect, params.walker_aspect_sd)
        walker_cx = rng.uniform(0.25, 0.55) * w_img
        walker_cy = rng.normal(params.walker_cy_frac[r], params.walker_cy_sd) * h_img

        ext = params.offset_extension[0 if rng.random() < params.extension_weight else 1]
        dog_h = walker_h * rng.normal(params.dog_height_ratio[r], params.dog_height_ratio_sd[r])
        dog_w = dog_h * rng.normal(params.dog_aspect[r], params.dog_aspect_sd[r])
        dog_cx = walker_cx + rng.normal(ext * params.dog_dx_frac[r], params.dog_dx_sd[r]) * w_img
        dog_cy = walker_cy + rng.normal(ext * params.dog_dy_frac[r], params.dog_dy_sd[r]) * h_img

        walker = _clamped_box(walker_cx, walker_cy, abs(walker_w), abs(walker_h), w_img, h_img)
        dog = _clamped_box(dog_cx, dog_cy, abs(dog_w), abs(dog_h), w_img, h_img)

        # leash: from the walker's hand area to the dog's center, padded,
        # with annotation slop on every edge
        anchor_x = walker.cx + 0.25 * walker.w
        anchor_y = walker.cy - 0.05 * walker.h
        pad = params.leash_pad_frac * min(w_img, h_img)
        slop = params.leash_jitter_frac * min(w_img, h_img)
        jit = rng.normal(0.0, slop, size=4) if slop > 0 else np.zeros(4)
        x0 = min(anchor_x, dog.cx) - pad + jit[0]
        x1 = max(anchor_x, dog.cx) + pad + jit[1]
        y0 = min(anchor_y, dog.cy) - pad + jit[2]
        y1 = max(anchor_y, dog.cy) + pad + jit[3]
        leash = _clamped_box(0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0, w_img, h_img)

        images.append(
            SituationImage(
                image_id=f"synthetic-{i:04d}",
                width=w_img,
                height=h_img,
                boxes={"dog": dog, "dog-walker": walker, "leash": leash},
            )
        )
    return Dataset(
        images=tuple(images),
        categories=CATEGORIES,
        provenance={"kind": "synthetic", "n": n},
    )
