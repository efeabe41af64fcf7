"""First-frame subject selection: confidence filtering and box+point prompts.

The detector itself is external; its detections are ingested as data and
turned into the box-plus-centroid visual prompts a promptable video
segmenter expects. Label value 1 tags both the positive box and the
foreground point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoSubjectError
from .geom import Box2, box_centroid

FOREGROUND_LABEL = 1
BOX_LABEL = 1


@dataclass(frozen=True)
class Detection:
    box: Box2
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score) or not (0.0 <= self.score <= 1.0):
            raise ValueError(f"detection score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class DetectionConfig:
    confidence_threshold: float = 0.5

    def __post_init__(self):
        t = self.confidence_threshold
        if not np.isfinite(t) or not (0.0 <= t <= 1.0):
            raise ValueError(f"confidence threshold must be in [0, 1], got {t}")


@dataclass(frozen=True)
class VisualPrompt:
    """A positive box plus a foreground point at its centroid."""

    box: Box2
    point: tuple[float, float]
    box_label: int = BOX_LABEL
    point_label: int = FOREGROUND_LABEL

    def __post_init__(self):
        x, y = self.point
        inside = self.box.x_min <= x <= self.box.x_max and self.box.y_min <= y <= self.box.y_max
        if not inside:
            raise ValueError(f"prompt point {self.point} lies outside its box")


def filter_detections(detections: list[Detection], config: DetectionConfig) -> list[Detection]:
    """Keep detections scoring strictly above the threshold, order preserved."""
    return [d for d in detections if d.score > config.confidence_threshold]


def select_primary(detections: list[Detection]) -> Detection:
    """Highest-confidence detection; ties broken by lowest index."""
    if not detections:
        raise NoSubjectError("no detections to select a subject from")
    best = detections[0]
    for det in detections[1:]:
        if det.score > best.score:
            best = det
    return best


def build_prompt(detection: Detection) -> VisualPrompt:
    """Box-plus-centroid prompt for one detection."""
    return VisualPrompt(box=detection.box, point=box_centroid(detection.box))


def build_prompts(detections: list[Detection], config: DetectionConfig) -> list[VisualPrompt]:
    """One prompt per above-threshold detection (multi-subject variant)."""
    return [build_prompt(d) for d in filter_detections(detections, config)]
