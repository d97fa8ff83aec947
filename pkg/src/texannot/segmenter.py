"""Sliding-window segmentation: classify windows, keep the confident ones,
group same-class overlapping windows, and propose the convex hull of each
group with the mean confidence as its score.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .classifier import PatchClassifier
from .errors import IncompatibilityError
from .geometry import Polygon, build_adjacency, connected_components, hull_of_rects
from .imaging import PATCH_SIZE, DEFAULT_STRIDE, Raster, Rect, crop, generate_windows, resize
from .store import BACKGROUND

DEFAULT_THRESHOLD = 0.85


@dataclass
class WindowClassification:
    """One classified sliding window: where, what, how confident."""

    rect: Rect
    class_id: str
    confidence: float


@dataclass
class ProposedSegment:
    """A per-class convex hull over a connected group of windows."""

    id: str
    image_id: str
    class_id: str
    hull: Polygon
    score: float
    member_windows: list[WindowClassification] = field(default_factory=list)
    status: str = "proposed"


def scan_windows(model: PatchClassifier, image: Raster,
                 win: int = PATCH_SIZE, stride: int = DEFAULT_STRIDE) -> list[WindowClassification]:
    """Classify every sliding window; no confidence threshold applied."""
    if not getattr(model, "class_roster", None):
        raise IncompatibilityError("classifier exposes no class roster")
    out = []
    for rect in generate_windows(image.width, image.height, win, stride):
        patch = crop(image, rect)
        if patch.width != win or patch.height != win:  # pragma: no cover - windows are exact
            patch = resize(patch, win, win)
        dist = model.predict(patch)
        out.append(WindowClassification(rect=rect, class_id=dist.top_class,
                                        confidence=dist.confidence))
    return out


def filter_windows(windows: list[WindowClassification],
                   threshold: float = DEFAULT_THRESHOLD) -> list[WindowClassification]:
    """Keep windows at or above the confidence threshold."""
    return [w for w in windows if w.confidence >= threshold]


def classify_windows(model: PatchClassifier, image: Raster,
                     threshold: float = DEFAULT_THRESHOLD) -> list[WindowClassification]:
    """Windows whose top-class confidence clears the threshold.

    Background windows are kept here (they feed ranking diagnostics) but are
    never turned into proposals by group_segments.
    """
    return filter_windows(scan_windows(model, image), threshold)


def _segment_id(image_id: str, class_id: str, members: list[WindowClassification]) -> str:
    key = "|".join([image_id, class_id] + [f"{w.rect.to_tuple()}:{w.confidence:.6f}" for w in members])
    return "seg-" + hashlib.sha256(key.encode()).hexdigest()[:16]


def group_segments(windows: list[WindowClassification],
                   image_id: str = "") -> list[ProposedSegment]:
    """Merge overlapping same-class windows into hull proposals.

    Grouping runs independently per class: connected components of the
    positive-area overlap graph, then the convex hull of all member window
    corners. A segment's score is the arithmetic mean of member confidences.
    """
    by_class: dict[str, list[WindowClassification]] = {}
    for w in windows:
        if w.class_id == BACKGROUND:
            continue
        by_class.setdefault(w.class_id, []).append(w)

    segments = []
    for class_id in sorted(by_class):
        members_all = by_class[class_id]
        adjacency = build_adjacency([w.rect for w in members_all])
        for component in connected_components(adjacency):
            members = [members_all[i] for i in sorted(component)]
            hull = hull_of_rects([w.rect for w in members])
            score = sum(w.confidence for w in members) / len(members)
            segments.append(ProposedSegment(
                id=_segment_id(image_id, class_id, members), image_id=image_id,
                class_id=class_id, hull=hull, score=score, member_windows=members))
    segments.sort(key=lambda s: (-s.score, s.class_id, s.hull.vertices[0]))
    return segments


def segment_image(model: PatchClassifier, image: Raster,
                  threshold: float = DEFAULT_THRESHOLD) -> list[ProposedSegment]:
    """End-to-end proposal generation for one image, best score first."""
    return group_segments(classify_windows(model, image, threshold), image_id=image.id)
