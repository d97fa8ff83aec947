"""File-backed store for images, masks, annotations, proposals, decisions,
models, dataset descriptors, scores, and evaluation reports.

Layout under a root directory:

    nomenclature.json                  closed class vocabulary, versioned
    manifest.ndjson                    one image entry per line
    images/<image_id>.png              8-bit RGB scenes
    masks/<image_id>__<class>.png      0/255 ground-truth masks
    records/annotations.ndjson
    records/proposals.ndjson           append-only; status resolved from decisions
    records/decisions.ndjson           append-only decision log
    records/scores.ndjson              per (model, image, class) presence scores
    records/reports.ndjson             evaluation report summaries
    datasets/<dataset_id>.json         patch provenance descriptors
    models/<model_id>.model            serialized classifiers
    reports/<report_id>.json           full evaluation reports

Whole files are written atomically (temp + rename); NDJSON collections are
append-only logs written by a single writer. All text is UTF-8; record ids
are content-derived for images and random unless the caller supplies them.
"""

from __future__ import annotations

import hashlib
import json
import os
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator

import numpy as np
from PIL import Image

from .errors import ConflictError, IntegrityError, NotFoundError, ValidationError
from .geometry import Polygon
from .imaging import Raster, Rect, decode_png, encode_png

BACKGROUND = "background"

# Default closed vocabulary: the eight forensic classes plus background.
DEFAULT_NOMENCLATURE = [
    BACKGROUND,
    "maggots",
    "scale",
    "purge",
    "mummification",
    "eggs",
    "mold",
    "marbling",
    "plastic",
]

ORIGIN_MANUAL = "manual"
ORIGIN_ACCEPTED = "accepted-proposal"


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


def geometry_to_json(geom: Rect | Polygon) -> dict:
    if isinstance(geom, Rect):
        return {"rect": list(geom.to_tuple())}
    return {"polygon": [list(p) for p in geom.vertices]}


def geometry_from_json(obj: dict) -> Rect | Polygon:
    if "rect" in obj:
        return Rect(*obj["rect"])
    if "polygon" in obj:
        return Polygon(tuple((int(x), int(y)) for x, y in obj["polygon"]))
    raise ValidationError(f"unknown geometry {obj!r}")


def geometry_bounding_rect(geom: Rect | Polygon) -> Rect:
    return geom if isinstance(geom, Rect) else geom.bounding_rect()


@dataclass
class AnnotationRecord:
    """A labeled region: manual rectangle or accepted proposal polygon."""

    id: str
    image_id: str
    geometry: Rect | Polygon
    class_name: str
    annotator: str
    created_at: str
    origin: str = ORIGIN_MANUAL
    source_proposal: str | None = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "image_id": self.image_id,
            "geometry": geometry_to_json(self.geometry),
            "class_name": self.class_name,
            "annotator": self.annotator,
            "created_at": self.created_at,
            "origin": self.origin,
            "source_proposal": self.source_proposal,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AnnotationRecord":
        return cls(id=obj["id"], image_id=obj["image_id"],
                   geometry=geometry_from_json(obj["geometry"]),
                   class_name=obj["class_name"], annotator=obj["annotator"],
                   created_at=obj["created_at"], origin=obj["origin"],
                   source_proposal=obj.get("source_proposal"))


@dataclass
class WindowRecord:
    """Persisted form of one classified sliding window."""

    rect: Rect
    class_id: str
    confidence: float

    def to_json(self) -> dict:
        return {"rect": list(self.rect.to_tuple()), "class_id": self.class_id,
                "confidence": round(self.confidence, 6)}

    @classmethod
    def from_json(cls, obj: dict) -> "WindowRecord":
        return cls(Rect(*obj["rect"]), obj["class_id"], obj["confidence"])


@dataclass
class ProposalRecord:
    """A proposed segment awaiting review. Status is resolved from decisions."""

    id: str
    image_id: str
    class_id: str
    hull: Polygon
    score: float
    member_windows: list[WindowRecord]
    status: str = "proposed"

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "image_id": self.image_id,
            "class_id": self.class_id,
            "hull": [list(p) for p in self.hull.vertices],
            "score": round(self.score, 6),
            "member_windows": [w.to_json() for w in self.member_windows],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ProposalRecord":
        return cls(id=obj["id"], image_id=obj["image_id"], class_id=obj["class_id"],
                   hull=Polygon(tuple((int(x), int(y)) for x, y in obj["hull"])),
                   score=obj["score"],
                   member_windows=[WindowRecord.from_json(w) for w in obj["member_windows"]])


@dataclass
class DecisionRecord:
    proposal_id: str
    decision: str  # accept | decline | accept-with-edit
    annotator: str
    timestamp: str
    edited_geometry: Polygon | None = None

    def to_json(self) -> dict:
        return {
            "proposal_id": self.proposal_id,
            "decision": self.decision,
            "annotator": self.annotator,
            "timestamp": self.timestamp,
            "edited_geometry": ([list(p) for p in self.edited_geometry.vertices]
                                if self.edited_geometry else None),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DecisionRecord":
        geom = obj.get("edited_geometry")
        return cls(proposal_id=obj["proposal_id"], decision=obj["decision"],
                   annotator=obj["annotator"], timestamp=obj["timestamp"],
                   edited_geometry=Polygon(tuple((int(x), int(y)) for x, y in geom)) if geom else None)


@dataclass
class ImageEntry:
    """Manifest line for one stored image."""

    id: str
    file: str
    width: int
    height: int
    sha256: str
    role: str = "train"  # train | eval
    scene_seed: int | None = None
    classes_present: list[str] = field(default_factory=list)
    masks: dict[str, dict] = field(default_factory=dict)  # class -> {file, sha256}

    def to_json(self) -> dict:
        return {"id": self.id, "file": self.file, "width": self.width, "height": self.height,
                "sha256": self.sha256, "role": self.role, "scene_seed": self.scene_seed,
                "classes_present": self.classes_present, "masks": self.masks}

    @classmethod
    def from_json(cls, obj: dict) -> "ImageEntry":
        return cls(**obj)


@dataclass
class ImageClassScore:
    """Presence estimate of one class in one image under one model."""

    image_id: str
    class_id: str
    presence_score: float
    support: int
    coverage: float
    model_id: str = ""

    def to_json(self) -> dict:
        return {"image_id": self.image_id, "class_id": self.class_id,
                "presence_score": round(self.presence_score, 6), "support": self.support,
                "coverage": round(self.coverage, 6), "model_id": self.model_id}

    @classmethod
    def from_json(cls, obj: dict) -> "ImageClassScore":
        return cls(**obj)


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _append_line(path: Path, obj: dict) -> None:
    line = json.dumps(obj, sort_keys=True) + "\n"
    with open(path, "a", encoding="utf-8") as f:
        f.write(line)
        f.flush()


def _read_lines(path: Path) -> Iterator[dict]:
    if not path.exists():
        return
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


def _random_id(prefix: str) -> str:
    return f"{prefix}-{uuid.uuid4().hex[:12]}"


class Store:
    """Single-writer, multi-reader record store rooted at a directory."""

    def __init__(self, root: str | Path, create: bool = True,
                 nomenclature: list[str] | None = None):
        self.root = Path(root)
        if create:
            for sub in ("images", "masks", "records", "datasets", "models", "reports"):
                (self.root / sub).mkdir(parents=True, exist_ok=True)
            if not self._nomenclature_path.exists():
                self._write_nomenclature(nomenclature or list(DEFAULT_NOMENCLATURE), version=1)
        elif not self.root.is_dir():
            raise NotFoundError(f"store root {self.root} does not exist")

    # -- nomenclature ------------------------------------------------------

    @property
    def _nomenclature_path(self) -> Path:
        return self.root / "nomenclature.json"

    def _write_nomenclature(self, classes: list[str], version: int) -> None:
        if len(set(classes)) != len(classes):
            raise ValidationError("nomenclature classes must be unique")
        if BACKGROUND not in classes or len(classes) < 2:
            raise ValidationError("nomenclature needs 'background' plus at least one class")
        payload = json.dumps({"version": version, "classes": classes}, sort_keys=True, indent=2)
        _atomic_write(self._nomenclature_path, payload.encode("utf-8"))

    def nomenclature(self) -> list[str]:
        obj = json.loads(self._nomenclature_path.read_text(encoding="utf-8"))
        return list(obj["classes"])

    # -- images and masks --------------------------------------------------

    @property
    def _manifest_path(self) -> Path:
        return self.root / "manifest.ndjson"

    def put_image(self, raster: Raster, role: str = "train",
                  masks: dict[str, np.ndarray] | None = None,
                  scene_seed: int | None = None,
                  classes_present: list[str] | None = None) -> ImageEntry:
        png = encode_png(raster)
        digest = hashlib.sha256(png).hexdigest()
        image_id = f"img-{digest[:16]}"
        file = f"images/{image_id}.png"
        _atomic_write(self.root / file, png)
        mask_info: dict[str, dict] = {}
        for class_name, mask in sorted((masks or {}).items()):
            mask_png = _encode_mask(mask)
            mask_file = f"masks/{image_id}__{class_name}.png"
            _atomic_write(self.root / mask_file, mask_png)
            mask_info[class_name] = {"file": mask_file,
                                     "sha256": hashlib.sha256(mask_png).hexdigest()}
        entry = ImageEntry(id=image_id, file=file, width=raster.width, height=raster.height,
                           sha256=digest, role=role, scene_seed=scene_seed,
                           classes_present=sorted(classes_present or []), masks=mask_info)
        existing = {e.id for e in self.list_images()}
        if image_id not in existing:
            _append_line(self._manifest_path, entry.to_json())
        return entry

    def list_images(self, role: str | None = None) -> list[ImageEntry]:
        entries = [ImageEntry.from_json(obj) for obj in _read_lines(self._manifest_path)]
        if role is not None:
            entries = [e for e in entries if e.role == role]
        return entries

    def get_image_entry(self, image_id: str) -> ImageEntry:
        for entry in self.list_images():
            if entry.id == image_id:
                return entry
        raise NotFoundError(f"image {image_id} not in manifest")

    def get_image(self, image_id: str) -> Raster:
        entry = self.get_image_entry(image_id)
        return decode_png((self.root / entry.file).read_bytes(), raster_id=image_id)

    def get_image_bytes(self, image_id: str) -> bytes:
        entry = self.get_image_entry(image_id)
        return (self.root / entry.file).read_bytes()

    def get_mask(self, image_id: str, class_name: str) -> np.ndarray:
        entry = self.get_image_entry(image_id)
        if class_name not in entry.masks:
            raise NotFoundError(f"no {class_name} mask for {image_id}")
        img = Image.open(self.root / entry.masks[class_name]["file"]).convert("L")
        return np.asarray(img, dtype=np.uint8) > 127

    # -- annotations -------------------------------------------------------

    @property
    def _annotations_path(self) -> Path:
        return self.root / "records" / "annotations.ndjson"

    def put_annotation(self, record: AnnotationRecord) -> AnnotationRecord:
        if not record.id:
            record.id = _random_id("ann")
        entry = self.get_image_entry(record.image_id)  # raises NotFoundError
        if record.class_name not in self.nomenclature():
            raise ValidationError(f"class {record.class_name!r} not in nomenclature")
        bbox = geometry_bounding_rect(record.geometry)
        if bbox.x1 > entry.width or bbox.y1 > entry.height:
            raise ValidationError(f"geometry {bbox.to_tuple()} outside image {entry.width}x{entry.height}")
        if record.source_proposal and not self._proposal_exists(record.source_proposal):
            raise IntegrityError(f"source proposal {record.source_proposal} does not exist")
        _append_line(self._annotations_path, record.to_json())
        return record

    def list_annotations(self, image_id: str | None = None, class_name: str | None = None,
                         origin: str | None = None) -> list[AnnotationRecord]:
        out = []
        for obj in _read_lines(self._annotations_path):
            if image_id is not None and obj["image_id"] != image_id:
                continue
            if class_name is not None and obj["class_name"] != class_name:
                continue
            if origin is not None and obj["origin"] != origin:
                continue
            out.append(AnnotationRecord.from_json(obj))
        return out

    def get_annotation(self, annotation_id: str) -> AnnotationRecord:
        for obj in _read_lines(self._annotations_path):
            if obj["id"] == annotation_id:
                return AnnotationRecord.from_json(obj)
        raise NotFoundError(f"annotation {annotation_id} not found")

    # -- proposals and decisions -------------------------------------------

    @property
    def _proposals_path(self) -> Path:
        return self.root / "records" / "proposals.ndjson"

    @property
    def _decisions_path(self) -> Path:
        return self.root / "records" / "decisions.ndjson"

    def _proposal_exists(self, proposal_id: str) -> bool:
        return any(obj["id"] == proposal_id for obj in _read_lines(self._proposals_path))

    def put_proposal(self, record: ProposalRecord) -> ProposalRecord:
        if not record.id:
            record.id = _random_id("prop")
        self.get_image_entry(record.image_id)
        if self._proposal_exists(record.id):
            raise ConflictError(f"proposal {record.id} already stored")
        _append_line(self._proposals_path, record.to_json())
        return record

    def _decision_for(self, proposal_id: str) -> DecisionRecord | None:
        latest = None
        for obj in _read_lines(self._decisions_path):
            if obj["proposal_id"] == proposal_id:
                latest = DecisionRecord.from_json(obj)
        return latest

    def _resolve_status(self, proposal_id: str) -> str:
        decision = self._decision_for(proposal_id)
        if decision is None:
            return "proposed"
        return "declined" if decision.decision == "decline" else "accepted"

    def get_proposal(self, proposal_id: str) -> ProposalRecord:
        for obj in _read_lines(self._proposals_path):
            if obj["id"] == proposal_id:
                record = ProposalRecord.from_json(obj)
                record.status = self._resolve_status(proposal_id)
                return record
        raise NotFoundError(f"proposal {proposal_id} not found")

    def list_proposals(self, image_id: str | None = None, class_id: str | None = None,
                       status: str | None = None) -> list[ProposalRecord]:
        out = []
        for obj in _read_lines(self._proposals_path):
            if image_id is not None and obj["image_id"] != image_id:
                continue
            if class_id is not None and obj["class_id"] != class_id:
                continue
            record = ProposalRecord.from_json(obj)
            record.status = self._resolve_status(record.id)
            if status is not None and record.status != status:
                continue
            out.append(record)
        return out

    def list_decisions(self, proposal_id: str | None = None) -> list[DecisionRecord]:
        out = []
        for obj in _read_lines(self._decisions_path):
            if proposal_id is not None and obj["proposal_id"] != proposal_id:
                continue
            out.append(DecisionRecord.from_json(obj))
        return out

    def accept_proposal(self, proposal_id: str, annotator: str,
                        edited_geometry: Polygon | None = None,
                        timestamp: str | None = None) -> AnnotationRecord:
        """Accept a proposal, creating a polygon annotation from its hull."""
        proposal = self.get_proposal(proposal_id)
        if proposal.status != "proposed":
            raise ConflictError(f"proposal {proposal_id} already {proposal.status}")
        now = timestamp or utc_now()
        decision = "accept-with-edit" if edited_geometry is not None else "accept"
        _append_line(self._decisions_path, DecisionRecord(
            proposal_id=proposal_id, decision=decision, annotator=annotator,
            timestamp=now, edited_geometry=edited_geometry).to_json())
        annotation = AnnotationRecord(
            id=_random_id("ann"), image_id=proposal.image_id,
            geometry=edited_geometry if edited_geometry is not None else proposal.hull,
            class_name=proposal.class_id, annotator=annotator, created_at=now,
            origin=ORIGIN_ACCEPTED, source_proposal=proposal_id)
        return self.put_annotation(annotation)

    def decline_proposal(self, proposal_id: str, annotator: str,
                         timestamp: str | None = None) -> DecisionRecord:
        proposal = self.get_proposal(proposal_id)
        if proposal.status != "proposed":
            raise ConflictError(f"proposal {proposal_id} already {proposal.status}")
        record = DecisionRecord(proposal_id=proposal_id, decision="decline",
                                annotator=annotator, timestamp=timestamp or utc_now())
        _append_line(self._decisions_path, record.to_json())
        return record

    # -- scores --------------------------------------------------------------

    @property
    def _scores_path(self) -> Path:
        return self.root / "records" / "scores.ndjson"

    def put_scores(self, scores: list[ImageClassScore]) -> None:
        for s in scores:
            if not s.model_id:
                raise ValidationError("scores must carry a model_id")
            _append_line(self._scores_path, s.to_json())

    def list_scores(self, model_id: str | None = None,
                    class_id: str | None = None) -> list[ImageClassScore]:
        out = []
        for obj in _read_lines(self._scores_path):
            if model_id is not None and obj["model_id"] != model_id:
                continue
            if class_id is not None and obj["class_id"] != class_id:
                continue
            out.append(ImageClassScore.from_json(obj))
        return out

    def latest_scored_model(self) -> str | None:
        model_id = None
        for obj in _read_lines(self._scores_path):
            model_id = obj["model_id"]
        return model_id

    # -- models, datasets, reports -------------------------------------------

    def put_model(self, model_id: str, data: bytes) -> Path:
        path = self.root / "models" / f"{model_id}.model"
        _atomic_write(path, data)
        return path

    def get_model(self, model_id: str) -> bytes:
        path = self.root / "models" / f"{model_id}.model"
        if not path.exists():
            raise NotFoundError(f"model {model_id} not found")
        return path.read_bytes()

    def list_models(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "models").glob("*.model"))

    def put_dataset(self, dataset_id: str, descriptor: dict) -> Path:
        path = self.root / "datasets" / f"{dataset_id}.json"
        _atomic_write(path, json.dumps(descriptor, sort_keys=True, indent=1).encode("utf-8"))
        return path

    def get_dataset(self, dataset_id: str) -> dict:
        path = self.root / "datasets" / f"{dataset_id}.json"
        if not path.exists():
            raise NotFoundError(f"dataset {dataset_id} not found")
        return json.loads(path.read_text(encoding="utf-8"))

    def list_datasets(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "datasets").glob("*.json"))

    @property
    def _reports_path(self) -> Path:
        return self.root / "records" / "reports.ndjson"

    def put_report(self, report_id: str, full_report: dict, summary: dict) -> None:
        _atomic_write(self.root / "reports" / f"{report_id}.json",
                      json.dumps(full_report, sort_keys=True, indent=1).encode("utf-8"))
        _append_line(self._reports_path, {"id": report_id, "created_at": utc_now(), **summary})

    def latest_report_summary(self) -> dict | None:
        latest = None
        for obj in _read_lines(self._reports_path):
            latest = obj
        return latest

    def get_report(self, report_id: str) -> dict:
        path = self.root / "reports" / f"{report_id}.json"
        if not path.exists():
            raise NotFoundError(f"report {report_id} not found")
        return json.loads(path.read_text(encoding="utf-8"))

    # -- audit ----------------------------------------------------------------

    def audit(self) -> list[str]:
        """Full referential-integrity sweep; returns human-readable violations."""
        problems = []
        images = {e.id for e in self.list_images()}
        nomenclature = set(self.nomenclature())
        proposals = {obj["id"] for obj in _read_lines(self._proposals_path)}
        for obj in _read_lines(self._annotations_path):
            if obj["image_id"] not in images:
                problems.append(f"annotation {obj['id']} references missing image {obj['image_id']}")
            if obj["class_name"] not in nomenclature:
                problems.append(f"annotation {obj['id']} uses unknown class {obj['class_name']}")
            if obj.get("source_proposal") and obj["source_proposal"] not in proposals:
                problems.append(f"annotation {obj['id']} references missing proposal")
        for obj in _read_lines(self._proposals_path):
            if obj["image_id"] not in images:
                problems.append(f"proposal {obj['id']} references missing image {obj['image_id']}")
        for obj in _read_lines(self._decisions_path):
            if obj["proposal_id"] not in proposals:
                problems.append(f"decision references missing proposal {obj['proposal_id']}")
        return problems


def _encode_mask(mask: np.ndarray) -> bytes:
    import io

    data = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    img = Image.fromarray(data, mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()
