"""Rank un-annotated images by how likely each class is present.

The presence score of a class in an image is the best score among that
class's proposed segments (0 if there are none) - a "is it anywhere in
this image" signal. Window-level support and coverage ride along as
secondary diagnostics; no probability calibration is claimed.
"""

from __future__ import annotations

from .classifier import PatchClassifier
from .errors import ValidationError
from .imaging import Raster
from .segmenter import DEFAULT_THRESHOLD, filter_windows, group_segments, scan_windows
from .store import BACKGROUND, AnnotationRecord, ImageClassScore, ORIGIN_MANUAL, Store


def score_image(model: PatchClassifier, image: Raster,
                threshold: float = DEFAULT_THRESHOLD,
                model_id: str = "") -> list[ImageClassScore]:
    """One score per non-background roster class for this image."""
    windows = scan_windows(model, image)
    kept = filter_windows(windows, threshold)
    segments = group_segments(kept, image_id=image.id)

    best: dict[str, float] = {}
    for seg in segments:
        best[seg.class_id] = max(best.get(seg.class_id, 0.0), seg.score)
    support: dict[str, int] = {}
    for w in kept:
        support[w.class_id] = support.get(w.class_id, 0) + 1
    predicted: dict[str, int] = {}
    for w in windows:
        predicted[w.class_id] = predicted.get(w.class_id, 0) + 1

    total = len(windows)
    return [ImageClassScore(image_id=image.id, class_id=name,
                            presence_score=best.get(name, 0.0),
                            support=support.get(name, 0),
                            coverage=predicted.get(name, 0) / total if total else 0.0,
                            model_id=model_id)
            for name in model.class_roster if name != BACKGROUND]


def rank_unannotated(scores: list[ImageClassScore], annotations: list[AnnotationRecord],
                     class_id: str, k: int, class_roster: list[str]) -> list[ImageClassScore]:
    """Top-k images for a class, skipping images already manually annotated.

    Order: presence score descending, then support descending, then image id.
    """
    if class_id not in class_roster:
        raise ValidationError(f"class {class_id!r} not in roster {class_roster}")
    manually_annotated = {a.image_id for a in annotations
                          if a.origin == ORIGIN_MANUAL and a.class_name == class_id}
    candidates = [s for s in scores
                  if s.class_id == class_id and s.image_id not in manually_annotated]
    candidates.sort(key=lambda s: (-s.presence_score, -s.support, s.image_id))
    return candidates[:k]


def score_corpus(store: Store, model: PatchClassifier, model_id: str,
                 role: str | None = None, threshold: float = DEFAULT_THRESHOLD,
                 progress=None) -> list[ImageClassScore]:
    """Score every (image, class) pair and persist under the model id.

    Scores are keyed by model id, so retraining invalidates old scores by
    simply scoring under the new id.
    """
    entries = store.list_images(role=role)
    out: list[ImageClassScore] = []
    for i, entry in enumerate(entries):
        image = store.get_image(entry.id)
        out.extend(score_image(model, image, threshold=threshold, model_id=model_id))
        if progress is not None:
            progress((i + 1) / len(entries))
    store.put_scores(out)
    return out


def queue_for_class(store: Store, class_id: str, k: int,
                    model_id: str | None = None) -> list[ImageClassScore]:
    """Ranked queue straight from persisted scores (latest model by default)."""
    model_id = model_id or store.latest_scored_model()
    if model_id is None:
        return []
    scores = store.list_scores(model_id=model_id)
    return rank_unannotated(scores, store.list_annotations(), class_id, k,
                            store.nomenclature())
