"""Raster primitives: rectangles, sliding windows, crop/resize, augmentation.

Everything here is a pure function over immutable inputs. Pixels are 8-bit
RGB numpy arrays of shape (height, width, 3); rectangles are half-open
integer boxes [x0, x1) x [y0, y1).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import BoundsError, ImageTooSmallError, ValidationError

PATCH_SIZE = 224
DEFAULT_STRIDE = 200

ZOOM_RANGE = (1.0, 1.3)
SCALE_RANGE = (0.8, 1.2)
SHEAR_RANGE = (-15.0, 15.0)


@dataclass(frozen=True)
class Rect:
    """Half-open integer rectangle [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 < self.x1 and 0 <= self.y0 < self.y1):
            raise ValidationError(f"invalid rect ({self.x0},{self.y0},{self.x1},{self.y1})")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def corners(self) -> list[tuple[int, int]]:
        """Geometric corner points, using the exclusive edge coordinates."""
        return [(self.x0, self.y0), (self.x1, self.y0), (self.x1, self.y1), (self.x0, self.y1)]

    def to_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass
class Raster:
    """8-bit RGB pixel grid. `pixels` has shape (height, width, 3), dtype uint8."""

    id: str
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise ValidationError(f"raster pixels must be (h, w, 3) uint8, got {p.shape} {p.dtype}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValidationError("raster must be at least 1x1")
        self.pixels = p

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def bounds(self) -> Rect:
        return Rect(0, 0, self.width, self.height)


def _axis_offsets(extent: int, win: int, stride: int) -> list[int]:
    # Final offset clamps to (extent - win) so the last window stays flush
    # with the border and every pixel is covered.
    offsets = list(range(0, extent - win + 1, stride))
    if offsets[-1] < extent - win:
        offsets.append(extent - win)
    return offsets


def generate_windows(width: int, height: int, win: int = PATCH_SIZE,
                     stride: int = DEFAULT_STRIDE) -> list[Rect]:
    """Enumerate win x win sliding windows in row-major (y, x) order.

    Offsets advance by `stride`; the last offset on each axis is clamped to
    (extent - win) when a full stride would overrun the border.
    """
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    if width < win or height < win:
        raise ImageTooSmallError(f"image {width}x{height} smaller than window {win}")
    xs = _axis_offsets(width, win, stride)
    ys = _axis_offsets(height, win, stride)
    return [Rect(x, y, x + win, y + win) for y in ys for x in xs]


def crop(raster: Raster, r: Rect) -> Raster:
    """Extract the sub-raster covered by `r`."""
    if r.x1 > raster.width or r.y1 > raster.height:
        raise BoundsError(f"rect {r.to_tuple()} outside raster {raster.width}x{raster.height}")
    return Raster(id=f"{raster.id}@{r.x0},{r.y0},{r.x1},{r.y1}",
                  pixels=raster.pixels[r.y0:r.y1, r.x0:r.x1].copy())


def _lerp(a: np.ndarray, b: np.ndarray, t: np.ndarray) -> np.ndarray:
    # a + t*(b - a): exact for a == b and for t == 0, which gives us
    # constant preservation and byte-identical same-size resize.
    return a + t * (b - a)


def resize(raster: Raster, w: int = PATCH_SIZE, h: int = PATCH_SIZE) -> Raster:
    """Bilinear resize to w x h (pixel centers aligned, edges clamped)."""
    if w < 1 or h < 1:
        raise ValidationError(f"invalid target size {w}x{h}")
    src = raster.pixels.astype(np.float64)
    sh, sw = src.shape[:2]

    sx = (np.arange(w) + 0.5) * (sw / w) - 0.5
    sy = (np.arange(h) + 0.5) * (sh / h) - 0.5
    x0 = np.clip(np.floor(sx), 0, sw - 1).astype(np.intp)
    y0 = np.clip(np.floor(sy), 0, sh - 1).astype(np.intp)
    x1 = np.minimum(x0 + 1, sw - 1)
    y1 = np.minimum(y0 + 1, sh - 1)
    fx = np.clip(sx - x0, 0.0, 1.0)[None, :, None]
    fy = np.clip(sy - y0, 0.0, 1.0)[:, None, None]

    top = _lerp(src[np.ix_(y0, x0)], src[np.ix_(y0, x1)], fx)
    bottom = _lerp(src[np.ix_(y1, x0)], src[np.ix_(y1, x1)], fx)
    out = _lerp(top, bottom, fy)
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return Raster(id=f"{raster.id}!{w}x{h}", pixels=out)


@dataclass(frozen=True)
class AugmentSpec:
    """One deterministic augmentation: flip-h | flip-v | zoom | scale | shear.

    zoom/scale carry `factor`, shear carries `angle` (degrees). The tag form
    round-trips through dataset descriptors.
    """

    kind: str
    factor: float | None = None
    angle: float | None = None

    def __post_init__(self):
        if self.kind in ("flip-h", "flip-v"):
            if self.factor is not None or self.angle is not None:
                raise ValidationError(f"{self.kind} takes no parameter")
        elif self.kind == "zoom":
            if self.factor is None or not ZOOM_RANGE[0] <= self.factor <= ZOOM_RANGE[1]:
                raise ValidationError(f"zoom factor {self.factor} outside {ZOOM_RANGE}")
        elif self.kind == "scale":
            if self.factor is None or not SCALE_RANGE[0] <= self.factor <= SCALE_RANGE[1]:
                raise ValidationError(f"scale factor {self.factor} outside {SCALE_RANGE}")
        elif self.kind == "shear":
            if self.angle is None or not SHEAR_RANGE[0] <= self.angle <= SHEAR_RANGE[1]:
                raise ValidationError(f"shear angle {self.angle} outside {SHEAR_RANGE}")
        else:
            raise ValidationError(f"unknown augmentation kind {self.kind!r}")

    @property
    def tag(self) -> str:
        if self.kind in ("flip-h", "flip-v"):
            return self.kind
        if self.kind == "shear":
            return f"shear:{self.angle:.4f}"
        return f"{self.kind}:{self.factor:.4f}"

    @classmethod
    def from_tag(cls, tag: str) -> "AugmentSpec":
        if tag in ("flip-h", "flip-v"):
            return cls(tag)
        kind, _, value = tag.partition(":")
        if kind == "shear":
            return cls(kind, angle=float(value))
        if kind in ("zoom", "scale"):
            return cls(kind, factor=float(value))
        raise ValidationError(f"unknown augmentation tag {tag!r}")


def _center_crop(pixels: np.ndarray, size: int) -> np.ndarray:
    h, w = pixels.shape[:2]
    y = (h - size) // 2
    x = (w - size) // 2
    return pixels[y:y + size, x:x + size]


def _pad_replicate(pixels: np.ndarray, size: int) -> np.ndarray:
    h, w = pixels.shape[:2]
    top = (size - h) // 2
    left = (size - w) // 2
    return np.pad(pixels, ((top, size - h - top), (left, size - w - left), (0, 0)), mode="edge")


def _shear(pixels: np.ndarray, angle_deg: float) -> np.ndarray:
    # Horizontal shear about the patch center, edge-replicated sampling.
    h, w = pixels.shape[:2]
    cy = (h - 1) / 2.0
    t = np.tan(np.radians(angle_deg))
    ys, xs = np.mgrid[0:h, 0:w]
    src_x = xs + t * (ys - cy)
    x0 = np.clip(np.floor(src_x), 0, w - 1).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    fx = np.clip(src_x - x0, 0.0, 1.0)[..., None]
    src = pixels.astype(np.float64)
    out = _lerp(src[ys, x0], src[ys, x1], fx)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def augment(patch: Raster, spec: AugmentSpec) -> Raster:
    """Apply one augmentation to a 224x224 patch; output is again 224x224."""
    if patch.width != PATCH_SIZE or patch.height != PATCH_SIZE:
        raise ValidationError(f"augment expects {PATCH_SIZE}x{PATCH_SIZE}, got {patch.width}x{patch.height}")
    px = patch.pixels
    if spec.kind == "flip-h":
        out = px[:, ::-1]
    elif spec.kind == "flip-v":
        out = px[::-1, :]
    elif spec.kind in ("zoom", "scale"):
        target = int(round(PATCH_SIZE * spec.factor))
        resized = resize(patch, target, target).pixels
        if target >= PATCH_SIZE:
            out = _center_crop(resized, PATCH_SIZE)
        else:
            out = _pad_replicate(resized, PATCH_SIZE)
    elif spec.kind == "shear":
        out = _shear(px, spec.angle)
    else:  # pragma: no cover - AugmentSpec already validated
        raise ValidationError(f"unknown augmentation kind {spec.kind!r}")
    return Raster(id=f"{patch.id}+{spec.tag}", pixels=np.ascontiguousarray(out))


def decode_png(data: bytes, raster_id: str = "") -> Raster:
    """Decode PNG bytes to an RGB raster (alpha stripped, palette expanded)."""
    img = Image.open(io.BytesIO(data))
    img = img.convert("RGB")
    return Raster(id=raster_id, pixels=np.asarray(img, dtype=np.uint8))


def encode_png(raster: Raster) -> bytes:
    """Encode a raster as PNG bytes (deterministic for fixed pixel content)."""
    img = Image.fromarray(raster.pixels, mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()
