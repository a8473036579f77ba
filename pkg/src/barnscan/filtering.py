"""Rule-based object classifier: keep objects whose shape looks like a barn.

An object is a barn when its rectangle area and aspect ratio fall inside the
ranges seen on labelled barns (bounds inclusive) and it does not touch a road.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence

from .objects import DetectedObject

__all__ = [
    "RuleSet",
    "Classification",
    "DEFAULT_RULES",
    "default_rules",
    "derive_rules",
    "classify",
    "filter_objects",
    "REASONS",
]

REASONS = (
    "area-below-min",
    "area-above-max",
    "aspect-below-min",
    "aspect-above-max",
    "road-intersection",
)


@dataclass(frozen=True)
class RuleSet:
    area_range: tuple[float, float]
    aspect_range: tuple[float, float]
    road_buffer: float = 0.0

    def __post_init__(self):
        for name in ("area_range", "aspect_range"):
            lo, hi = getattr(self, name)
            if not (0 <= lo <= hi):
                raise ValueError(f"{name} must satisfy 0 <= min <= max, got {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.road_buffer < 0:
            raise ValueError("road_buffer must be >= 0")

    def to_json(self) -> dict:
        return {
            "area_m2": list(self.area_range),
            "aspect": list(self.aspect_range),
            "road_buffer_m": self.road_buffer,
        }

    @classmethod
    def from_json(cls, data: dict) -> "RuleSet":
        try:
            return cls(tuple(data["area_m2"]), tuple(data["aspect"]), float(data.get("road_buffer_m", 0.0)))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed rule set: {exc!r}") from None

    @classmethod
    def load(cls, path) -> "RuleSet":
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")


def default_rules() -> RuleSet:
    """Barn area and aspect ranges measured on hand-labelled barns, shipped as package data."""
    text = resources.files("barnscan").joinpath("data/default_rules.json").read_text()
    return RuleSet.from_json(json.loads(text))


DEFAULT_RULES = RuleSet((525.0, 8106.0), (3.4, 20.49), 0.0)


class Classification(NamedTuple):
    is_barn: bool
    reason: str | None


def derive_rules(labeled: Sequence[DetectedObject]) -> RuleSet:
    """Feature ranges (min, max) over labelled barns."""
    if not labeled:
        raise ValueError("need at least one labelled object")
    areas = [o.area for o in labeled]
    aspects = [o.aspect_ratio for o in labeled]
    return RuleSet((min(areas), max(areas)), (min(aspects), max(aspects)), 0.0)


def classify(obj: DetectedObject, rules: RuleSet) -> Classification:
    """First failing rule, checked in the order area, aspect, road."""
    if obj.road_distance is None:
        raise ValueError(f"object {obj.object_id!r} has no road distance; run the roads stage first")
    lo, hi = rules.area_range
    if obj.area < lo:
        return Classification(False, "area-below-min")
    if obj.area > hi:
        return Classification(False, "area-above-max")
    lo, hi = rules.aspect_range
    if obj.aspect_ratio < lo:
        return Classification(False, "aspect-below-min")
    if obj.aspect_ratio > hi:
        return Classification(False, "aspect-above-max")
    if obj.road_distance <= rules.road_buffer:
        return Classification(False, "road-intersection")
    return Classification(True, None)


def filter_objects(objs: Sequence[DetectedObject], rules: RuleSet):
    """Split objects into ``(kept, [(obj, reason), ...])``, order preserved."""
    kept, rejected = [], []
    for obj in objs:
        verdict = classify(obj, rules)
        if verdict.is_barn:
            kept.append(obj)
        else:
            rejected.append((obj, verdict.reason))
    return kept, rejected
