"""Turn a partially annotated collection into a labeled training patch set.

Patches are provenance records (image id, rect, label, augmentation), not
pixel buffers: they are materialized on demand through an image source, so
a dataset descriptor is tiny and the split fits any amount of imagery.
"""

from __future__ import annotations

import hashlib
import json
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigurationError, IntegrityError, NotFoundError
from .geometry import rects_overlap
from .imaging import (PATCH_SIZE, DEFAULT_STRIDE, AugmentSpec, Raster, Rect,
                      augment, crop, generate_windows, resize)
from .store import BACKGROUND, AnnotationRecord, Store, geometry_bounding_rect

AUGMENT_KINDS = ("flip-h", "flip-v", "zoom", "scale", "shear")


@dataclass
class TrainingPatch:
    """One labeled 224x224 patch, identified by where it comes from."""

    image_id: str
    rect: Rect
    label: str
    source_annotation: str | None = None
    augmentation: AugmentSpec | None = None

    def materialize(self, images: Mapping[str, Raster]) -> Raster:
        patch = resize(crop(images[self.image_id], self.rect), PATCH_SIZE, PATCH_SIZE)
        if self.augmentation is not None:
            patch = augment(patch, self.augmentation)
        return patch

    def to_json(self) -> dict:
        return {"image_id": self.image_id, "rect": list(self.rect.to_tuple()),
                "label": self.label, "source_annotation": self.source_annotation,
                "augmentation": self.augmentation.tag if self.augmentation else None}

    @classmethod
    def from_json(cls, obj: dict) -> "TrainingPatch":
        aug = obj.get("augmentation")
        return cls(image_id=obj["image_id"], rect=Rect(*obj["rect"]), label=obj["label"],
                   source_annotation=obj.get("source_annotation"),
                   augmentation=AugmentSpec.from_tag(aug) if aug else None)


@dataclass
class DatasetSplit:
    train: list[TrainingPatch]
    validation: list[TrainingPatch]
    class_roster: list[str]
    seed: int


class LruImageSource:
    """Mapping-style image loader over a store, with a bounded pixel cache."""

    def __init__(self, store: Store, capacity: int = 16):
        self._store = store
        self._capacity = capacity
        self._cache: OrderedDict[str, Raster] = OrderedDict()

    def __getitem__(self, image_id: str) -> Raster:
        if image_id in self._cache:
            self._cache.move_to_end(image_id)
            return self._cache[image_id]
        raster = self._store.get_image(image_id)
        self._cache[image_id] = raster
        if len(self._cache) > self._capacity:
            self._cache.popitem(last=False)
        return raster


@dataclass
class Corpus:
    """Images plus their annotations, the input to dataset building."""

    images: Mapping[str, Raster]
    annotations: list[AnnotationRecord]
    image_ids: list[str] = field(default_factory=list)

    @classmethod
    def from_store(cls, store: Store, role: str = "train", cache: int = 16) -> "Corpus":
        ids = [e.id for e in store.list_images(role=role)]
        id_set = set(ids)
        annotations = [a for a in store.list_annotations() if a.image_id in id_set]
        return cls(images=LruImageSource(store, cache), annotations=annotations, image_ids=ids)


def extract_class_patches(images: Mapping[str, Raster],
                          annotations: list[AnnotationRecord]) -> list[TrainingPatch]:
    """One patch per annotation: the annotated region, cropped and resized."""
    patches = []
    for ann in annotations:
        try:
            images[ann.image_id]
        except (KeyError, NotFoundError):
            raise IntegrityError(f"annotation {ann.id} references missing image {ann.image_id}")
        patches.append(TrainingPatch(image_id=ann.image_id,
                                     rect=geometry_bounding_rect(ann.geometry),
                                     label=ann.class_name, source_annotation=ann.id))
    return patches


def extract_background_patches(image: Raster, annotations: list[AnnotationRecord],
                               win: int = PATCH_SIZE,
                               stride: int = DEFAULT_STRIDE) -> list[TrainingPatch]:
    """Sliding windows that do not touch any annotation on the image.

    Zero-area intersection with every annotation rect keeps the background
    class pure with respect to what has been labeled; unlabeled instances can
    still leak in, which is inherent to incomplete annotation.
    """
    rects = [geometry_bounding_rect(a.geometry) for a in annotations]
    out = []
    for window in generate_windows(image.width, image.height, win, stride):
        if any(rects_overlap(window, r) for r in rects):
            continue
        out.append(TrainingPatch(image_id=image.id, rect=window, label=BACKGROUND))
    return out


def _random_augment(rng: np.random.Generator) -> AugmentSpec:
    kind = AUGMENT_KINDS[int(rng.integers(len(AUGMENT_KINDS)))]
    if kind == "zoom":
        return AugmentSpec(kind, factor=float(np.round(rng.uniform(1.0, 1.3), 4)))
    if kind == "scale":
        return AugmentSpec(kind, factor=float(np.round(rng.uniform(0.8, 1.2), 4)))
    if kind == "shear":
        return AugmentSpec(kind, angle=float(np.round(rng.uniform(-15.0, 15.0), 4)))
    return AugmentSpec(kind)


def _validation_count(n: int, val_fraction: float) -> int:
    # epsilon guards the floor against float dust: 102 * (1/3) must give 34
    count = int(n * val_fraction + 1e-9)
    if count == 0 and n >= 3:
        count = 1
    return count


def build_dataset(corpus: Corpus, min_instances: int = 100, val_fraction: float = 1 / 3,
                  augment_per_patch: int = 4, seed: int = 0) -> DatasetSplit:
    """Filter rare classes, split per class, and augment the training side.

    Classes with fewer than `min_instances` annotations are dropped from the
    roster. Background patches come from annotation-free sliding windows and
    are exempt from the instance-count rule. Augmented variants only ever
    join the training side of the split.
    """
    if not corpus.annotations and not corpus.image_ids:
        raise ConfigurationError("corpus is empty")

    by_class: dict[str, list[AnnotationRecord]] = {}
    for ann in corpus.annotations:
        by_class.setdefault(ann.class_name, []).append(ann)
    kept = sorted(c for c, anns in by_class.items()
                  if c != BACKGROUND and len(anns) >= min_instances)
    if not kept:
        raise ConfigurationError(
            f"no class reaches {min_instances} instances "
            f"(counts: { {c: len(a) for c, a in sorted(by_class.items())} })")

    per_class: dict[str, list[TrainingPatch]] = {}
    for class_name in kept:
        per_class[class_name] = extract_class_patches(corpus.images, by_class[class_name])

    by_image: dict[str, list[AnnotationRecord]] = {}
    for ann in corpus.annotations:
        by_image.setdefault(ann.image_id, []).append(ann)
    background: list[TrainingPatch] = []
    image_ids = corpus.image_ids or sorted(by_image.keys())
    for image_id in image_ids:
        image = corpus.images[image_id]
        if image.width < PATCH_SIZE or image.height < PATCH_SIZE:
            continue
        background.extend(extract_background_patches(image, by_image.get(image_id, [])))
    per_class[BACKGROUND] = background

    rng = np.random.default_rng(seed)
    roster = [BACKGROUND] + kept
    train: list[TrainingPatch] = []
    validation: list[TrainingPatch] = []
    for class_name in roster:
        patches = per_class[class_name]
        order = rng.permutation(len(patches))
        n_val = _validation_count(len(patches), val_fraction)
        validation.extend(patches[i] for i in order[:n_val])
        base_train = [patches[i] for i in order[n_val:]]
        train.extend(base_train)
        for patch in base_train:
            for _ in range(augment_per_patch):
                spec = _random_augment(rng)
                train.append(TrainingPatch(image_id=patch.image_id, rect=patch.rect,
                                           label=patch.label,
                                           source_annotation=patch.source_annotation,
                                           augmentation=spec))
    return DatasetSplit(train=train, validation=validation, class_roster=roster, seed=seed)


def descriptor_from_split(split: DatasetSplit) -> dict:
    """Serializable dataset descriptor; id is a content hash, so identical
    builds collide onto the same descriptor."""
    body = {
        "class_roster": split.class_roster,
        "seed": split.seed,
        "train": [p.to_json() for p in split.train],
        "validation": [p.to_json() for p in split.validation],
    }
    digest = hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()
    return {"id": f"ds-{digest[:12]}", **body}


def split_from_descriptor(descriptor: dict) -> DatasetSplit:
    return DatasetSplit(
        train=[TrainingPatch.from_json(p) for p in descriptor["train"]],
        validation=[TrainingPatch.from_json(p) for p in descriptor["validation"]],
        class_roster=list(descriptor["class_roster"]),
        seed=descriptor["seed"])
