"""Deterministic synthetic texture scenes with ground-truth masks.

Each scene is a background texture with a handful of non-overlapping convex
blob instances painted in per-class procedural textures. Masks exactly match
painted pixels. Only a seeded fraction of instances is emitted as rectangle
annotations, which is how real collections end up partially annotated.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GenerationError, ValidationError
from .geometry import Polygon, convex_hull, polygon_pixel_mask
from .imaging import Raster, Rect
from .store import BACKGROUND, ORIGIN_MANUAL, AnnotationRecord, ImageEntry, Store

# Relative annotated-instance frequencies used as the default class mix.
DEFAULT_CLASS_MIX: list[tuple[str, float]] = [
    ("maggots", 1375),
    ("scale", 716),
    ("purge", 709),
    ("mummification", 557),
    ("eggs", 533),
    ("mold", 339),
    ("marbling", 241),
    ("plastic", 107),
]

SYNTH_ANNOTATOR = "synthetic"
SYNTH_TIMESTAMP = "2000-01-01T00:00:00Z"


@dataclass(frozen=True)
class SceneSpec:
    """Everything that determines one scene, including its RNG seed."""

    seed: int
    width: int = 1024
    height: int = 768
    class_mix: tuple[tuple[str, float], ...] = tuple(DEFAULT_CLASS_MIX)
    annotation_completeness: float = 0.8
    texture_params: dict = field(default_factory=dict)
    instances_min: int = 2
    instances_max: int = 5
    radius_min: int = 150
    radius_max: int = 280

    def __post_init__(self):
        weights = [w for _, w in self.class_mix]
        if not weights or any(w < 0 for w in weights) or sum(weights) == 0:
            raise ValidationError("class_mix weights must be >= 0 and not all zero")
        if not 0 < self.annotation_completeness <= 1:
            raise ValidationError("annotation_completeness must be in (0, 1]")
        if self.instances_min < 1 or self.instances_max < self.instances_min:
            raise ValidationError("invalid instance count range")


@dataclass
class Instance:
    class_name: str
    polygon: Polygon
    bbox: Rect


@dataclass
class GroundTruth:
    """Per-class masks plus the full and emitted (partial) annotation sets."""

    masks: dict[str, np.ndarray]
    instances: list[Instance]
    annotations: list[tuple[str, Rect]]


# -- procedural textures ----------------------------------------------------


def _value_noise(h: int, w: int, pitch: float, rng: np.random.Generator) -> np.ndarray:
    """Bilinear-interpolated random grid in [0, 1], features ~`pitch` px wide."""
    gw = max(2, int(round(w / pitch)) + 1)
    gh = max(2, int(round(h / pitch)) + 1)
    grid = rng.random((gh, gw))
    ys = np.linspace(0, gh - 1 - 1e-9, h)
    xs = np.linspace(0, gw - 1 - 1e-9, w)
    y0 = ys.astype(np.intp)
    x0 = xs.astype(np.intp)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = grid[y0][:, x0] * (1 - fx) + grid[y0][:, x0 + 1] * fx
    bot = grid[y0 + 1][:, x0] * (1 - fx) + grid[y0 + 1][:, x0 + 1] * fx
    return top * (1 - fy) + bot * fy


def _colorize(value: np.ndarray, low: tuple, high: tuple) -> np.ndarray:
    lo = np.asarray(low, dtype=np.float64)
    hi = np.asarray(high, dtype=np.float64)
    out = lo + value[..., None] * (hi - lo)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _stamp(field_: np.ndarray, cy: int, cx: int, radius: int, values: np.ndarray) -> None:
    # max-blend a (2r+1)^2 patch into the field, clipped at borders
    h, w = field_.shape
    y0, y1 = max(0, cy - radius), min(h, cy + radius + 1)
    x0, x1 = max(0, cx - radius), min(w, cx + radius + 1)
    vy0, vx0 = y0 - (cy - radius), x0 - (cx - radius)
    view = field_[y0:y1, x0:x1]
    np.maximum(view, values[vy0:vy0 + (y1 - y0), vx0:vx0 + (x1 - x0)], out=view)


def _tex_dots(h, w, rng):
    base = _value_noise(h, w, 40, rng) * 0.25
    field_ = np.zeros((h, w))
    for _ in range(max(30, h * w // 2200)):
        cy, cx = int(rng.integers(0, h)), int(rng.integers(0, w))
        r = int(rng.integers(4, 9))
        yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
        _stamp(field_, cy, cx, r, (xx * xx + yy * yy <= r * r).astype(float))
    return _colorize(np.clip(base + field_ * 0.75, 0, 1), (150, 120, 70), (250, 240, 200))


def _tex_checker(h, w, rng):
    cell = int(rng.integers(14, 26))
    ys, xs = np.mgrid[0:h, 0:w]
    value = (((xs // cell) + (ys // cell)) % 2).astype(float)
    value = value * 0.8 + _value_noise(h, w, 34, rng) * 0.2
    return _colorize(value, (60, 70, 90), (170, 190, 210))


def _tex_marble(h, w, rng):
    noise = _value_noise(h, w, 170, rng) * 4 + _value_noise(h, w, 57, rng)
    ys, xs = np.mgrid[0:h, 0:w]
    value = 0.5 + 0.5 * np.sin(xs * 0.05 + noise * 3.0)
    return _colorize(value, (80, 20, 20), (190, 90, 60))


def _tex_octaves(h, w, rng):
    value = np.zeros((h, w))
    amp, total = 1.0, 0.0
    for pitch in (256, 128, 64, 32):
        value += amp * _value_noise(h, w, pitch, rng)
        total += amp
        amp *= 0.5
    return _colorize(value / total, (90, 60, 30), (200, 170, 120))


def _tex_rings(h, w, rng):
    value = np.zeros((h, w))
    r = 30
    for _ in range(max(12, h * w // 6000)):
        cy, cx = int(rng.integers(0, h)), int(rng.integers(0, w))
        yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
        d = np.hypot(xx, yy)
        _stamp(value, cy, cx, r, (0.5 + 0.5 * np.cos(d * 0.5)) * (d < r))
    return _colorize(value, (170, 160, 100), (255, 250, 190))


def _tex_blotch(h, w, rng):
    value = (_value_noise(h, w, 100, rng) > 0.55).astype(float)
    value = value * 0.7 + _value_noise(h, w, 26, rng) * 0.3
    return _colorize(value, (40, 90, 40), (180, 230, 170))


def _tex_veins(h, w, rng):
    noise = _value_noise(h, w, 128, rng)
    veins = (np.abs(noise - 0.5) < 0.035).astype(float)
    value = veins * 0.85 + _value_noise(h, w, 37, rng) * 0.15
    return _colorize(value, (200, 150, 160), (90, 30, 110))


def _tex_gradient(h, w, rng):
    angle = rng.uniform(0, 2 * np.pi)
    ys, xs = np.mgrid[0:h, 0:w]
    value = xs * np.cos(angle) + ys * np.sin(angle)
    value = (value - value.min()) / max(np.ptp(value), 1e-9)
    value = 0.15 * _value_noise(h, w, 20, rng) + 0.85 * value
    return _colorize(value, (40, 70, 140), (140, 200, 250))


def _tex_background(h, w, rng):
    value = 0.5 * _value_noise(h, w, 73, rng) + 0.5 * (rng.random((h, w)) * 0.4 + 0.3)
    return _colorize(value, (70, 75, 65), (140, 145, 130))


_RECIPES = {
    "maggots": _tex_dots,
    "scale": _tex_checker,
    "purge": _tex_marble,
    "mummification": _tex_octaves,
    "eggs": _tex_rings,
    "mold": _tex_blotch,
    "marbling": _tex_veins,
    "plastic": _tex_gradient,
    BACKGROUND: _tex_background,
}

_FALLBACK_RECIPES = [_tex_dots, _tex_checker, _tex_marble, _tex_octaves,
                     _tex_rings, _tex_blotch, _tex_veins, _tex_gradient]


def texture_for_class(class_name: str, h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """Paint the class texture; unknown names hash onto a fixed recipe."""
    recipe = _RECIPES.get(class_name)
    if recipe is None:
        digest = int(hashlib.sha256(class_name.encode()).hexdigest(), 16)
        recipe = _FALLBACK_RECIPES[digest % len(_FALLBACK_RECIPES)]
    return recipe(h, w, rng)


# -- scene assembly -----------------------------------------------------------


def _blob_polygon(cx: int, cy: int, rx: int, ry: int, rng: np.random.Generator) -> Polygon:
    k = int(rng.integers(6, 11))
    angles = np.sort(rng.uniform(0, 2 * np.pi, size=k))
    radii = rng.uniform(0.65, 1.0, size=k)
    points = [(int(round(cx + rx * r * np.cos(a))), int(round(cy + ry * r * np.sin(a))))
              for a, r in zip(angles, radii)]
    return convex_hull(points)


def _mask_bbox(mask: np.ndarray) -> Rect:
    ys, xs = np.nonzero(mask)
    return Rect(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def generate_scene(spec: SceneSpec) -> tuple[Raster, GroundTruth]:
    """Render one scene. Same spec -> bit-identical raster and ground truth."""
    rng = np.random.default_rng(spec.seed)
    w, h = spec.width, spec.height
    canvas = texture_for_class(BACKGROUND, h, w, rng).copy()

    names = [name for name, _ in spec.class_mix]
    weights = np.array([wt for _, wt in spec.class_mix], dtype=np.float64)
    probs = weights / weights.sum()

    margin = 4
    if w < 2 * (spec.radius_min + margin) or h < 2 * (spec.radius_min + margin):
        raise GenerationError(f"canvas {w}x{h} too small for instances of radius {spec.radius_min}")

    n_target = int(rng.integers(spec.instances_min, spec.instances_max + 1))
    instances: list[Instance] = []
    taken: list[Rect] = []
    masks: dict[str, np.ndarray] = {}

    for _ in range(n_target):
        class_name = names[int(rng.choice(len(names), p=probs))]
        placed = False
        for _attempt in range(40):
            rx = int(rng.integers(spec.radius_min, spec.radius_max + 1))
            ry = int(rng.integers(spec.radius_min, spec.radius_max + 1))
            cx = int(rng.integers(rx + margin, w - rx - margin + 1))
            cy = int(rng.integers(ry + margin, h - ry - margin + 1))
            poly = _blob_polygon(cx, cy, rx, ry, rng)
            bbox = poly.bounding_rect()
            if bbox.x1 > w or bbox.y1 > h:
                continue
            if any(not (bbox.x1 <= t.x0 or t.x1 <= bbox.x0 or bbox.y1 <= t.y0 or t.y1 <= bbox.y0)
                   for t in taken):
                continue
            mask = polygon_pixel_mask(poly, w, h)
            if not mask.any():
                continue
            # paint only inside the bbox window; textures use absolute pixel
            # pitches so the look does not depend on instance size
            local = mask[bbox.y0:bbox.y1, bbox.x0:bbox.x1]
            tex = texture_for_class(class_name, bbox.height, bbox.width, rng)
            view = canvas[bbox.y0:bbox.y1, bbox.x0:bbox.x1]
            view[local] = tex[local]
            masks.setdefault(class_name, np.zeros((h, w), dtype=bool))
            masks[class_name] |= mask
            instances.append(Instance(class_name, poly, _mask_bbox(mask)))
            taken.append(bbox)
            placed = True
            break
        if not placed:
            continue

    if not instances:
        raise GenerationError(f"could not place any instance on {w}x{h} canvas (seed {spec.seed})")

    n_emit = int(round(spec.annotation_completeness * len(instances)))
    order = rng.permutation(len(instances))[:n_emit]
    annotations = [(instances[i].class_name, instances[i].bbox) for i in sorted(order)]

    raster = Raster(id=f"scene-{spec.seed}", pixels=canvas)
    return raster, GroundTruth(masks=masks, instances=instances, annotations=annotations)


def _scene_seed(corpus_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([corpus_seed, index]).generate_state(1)[0])


def generate_corpus(n_scenes: int, spec_template: SceneSpec, seed: int,
                    store: Store, role: str = "train") -> list[ImageEntry]:
    """Generate scenes into the store; returns the new manifest entries.

    Scene seeds derive from (seed, index), so the corpus is reproducible
    independent of the template's own seed field.
    """
    if n_scenes < 1:
        raise ValidationError("n_scenes must be >= 1")
    entries = []
    for i in range(n_scenes):
        spec = replace(spec_template, seed=_scene_seed(seed, i))
        raster, truth = generate_scene(spec)
        entry = store.put_image(
            raster, role=role, masks=truth.masks, scene_seed=spec.seed,
            classes_present=sorted(truth.masks.keys()))
        for j, (class_name, bbox) in enumerate(truth.annotations):
            digest = hashlib.sha256(
                f"{entry.id}|{class_name}|{bbox.to_tuple()}|{j}".encode()).hexdigest()
            store.put_annotation(AnnotationRecord(
                id=f"ann-{digest[:12]}", image_id=entry.id, geometry=bbox,
                class_name=class_name, annotator=SYNTH_ANNOTATOR,
                created_at=SYNTH_TIMESTAMP, origin=ORIGIN_MANUAL))
        entries.append(entry)
    return entries
