"""Object-detection annotation records and the parsers that produce them.

Three on-disk formats are supported plus the tool's own interchange format:

* ``kitti_txt`` — a directory of per-image label files (or one file).
  Whitespace-delimited rows; field 1 is the object type, fields 5-8 are the
  box as ``left top right bottom`` in absolute pixels::

      Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 ...

* ``coco_json`` — a single JSON document. Only ``images`` (id, file_name,
  width, height), ``annotations`` (image_id, category_id, bbox as x,y,w,h)
  and ``categories`` (id, name) are read; everything else is ignored.
  Record image ids are the file_name stem.

* ``yolo_txt`` — a directory of per-image label files with normalized
  ``class cx cy w h`` rows, plus two sidecar files in the same directory:
  ``classes.txt`` (one class name per line, line number = class index) and
  ``image_dims.json`` (``{"<image_id>": [width, height], ...}``) used to
  convert to absolute pixels.

* ``interchange`` — JSON Lines written by :func:`write_interchange`, one
  record per line. Parsing it back yields an equal record sequence.

Categories are canonicalized everywhere: lowercased, trimmed, then mapped
through the caller's alias table. Boxes with zero or negative area are
dropped at parse time (counted via the module logger, never an error).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .errors import MalformedLine, SchemaError, UnknownImageDimension

log = logging.getLogger(__name__)

KITTI_TXT = "kitti_txt"
COCO_JSON = "coco_json"
YOLO_TXT = "yolo_txt"
INTERCHANGE = "interchange"

FORMATS = (KITTI_TXT, COCO_JSON, YOLO_TXT, INTERCHANGE)

YOLO_CLASS_FILE = "classes.txt"
YOLO_DIMS_FILE = "image_dims.json"


@dataclass(frozen=True)
class AnnotationRecord:
    """One object instance: canonical category plus an absolute-pixel box."""

    image_id: str
    category: str
    bbox: tuple[float, float, float, float]  # x_min, y_min, x_max, y_max
    source_format: str

    def __post_init__(self) -> None:
        x_min, y_min, x_max, y_max = self.bbox
        if not (x_min < x_max and y_min < y_max):
            raise ValueError(f"degenerate bbox {self.bbox} for image {self.image_id!r}")
        if not self.category or self.category != self.category.strip().lower():
            raise ValueError(f"category {self.category!r} is not canonical")
        if self.source_format not in FORMATS:
            raise ValueError(f"unknown source format {self.source_format!r}")


def normalize_aliases(aliases: dict[str, str] | None) -> dict[str, str]:
    """Canonicalize both sides of a raw-label -> canonical-label alias map."""
    if not aliases:
        return {}
    return {k.strip().lower(): v.strip().lower() for k, v in aliases.items()}


def canonical_category(raw: str, aliases: dict[str, str] | None = None) -> str:
    """Lowercase + trim, then apply the user alias map (itself canonicalized)."""
    c = raw.strip().lower()
    if aliases:
        c = normalize_aliases(aliases).get(c, c)
    return c


def parse_annotations(
    fmt: str,
    source: str | Path,
    aliases: dict[str, str] | None = None,
) -> list[AnnotationRecord]:
    """Parse `source` in format `fmt` into canonical records.

    Empty sources yield an empty list. Structural problems raise
    :class:`MalformedLine` (with file/line/reason) or
    :class:`UnknownImageDimension` for YOLO inputs lacking a dims entry.
    """
    source = Path(source)
    if fmt not in FORMATS:
        raise ValueError(f"unsupported annotation format {fmt!r}; expected one of {FORMATS}")
    if not source.exists():
        raise FileNotFoundError(f"annotation source does not exist: {source}")
    aliases = normalize_aliases(aliases)
    if fmt == KITTI_TXT:
        return _parse_kitti(source, aliases)
    if fmt == COCO_JSON:
        return _parse_coco(source, aliases)
    if fmt == YOLO_TXT:
        return _parse_yolo(source, aliases)
    return read_interchange(source)


def _maybe_record(
    image_id: str,
    raw_category: str,
    bbox: tuple[float, float, float, float],
    fmt: str,
    aliases: dict[str, str] | None,
    dropped: list[int],
) -> AnnotationRecord | None:
    x_min, y_min, x_max, y_max = bbox
    if not (x_min < x_max and y_min < y_max):
        dropped[0] += 1
        return None
    category = raw_category.strip().lower()
    if aliases:
        category = aliases.get(category, category)
    if not category:
        dropped[0] += 1
        return None
    return AnnotationRecord(image_id, category, bbox, fmt)


def _label_files(directory: Path, skip: frozenset[str] = frozenset()) -> list[Path]:
    files = [p for p in sorted(directory.glob("*.txt")) if p.name not in skip]
    return files


def _parse_kitti(source: Path, aliases: dict[str, str] | None) -> list[AnnotationRecord]:
    files = [source] if source.is_file() else _label_files(source)
    records: list[AnnotationRecord] = []
    dropped = [0]
    for path in files:
        image_id = path.stem
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) < 8:
                raise MalformedLine(str(path), lineno, f"expected >= 8 fields, got {len(parts)}")
            try:
                box = tuple(float(v) for v in parts[4:8])
            except ValueError:
                raise MalformedLine(str(path), lineno, f"non-numeric bbox fields {parts[4:8]}")
            rec = _maybe_record(image_id, parts[0], box, KITTI_TXT, aliases, dropped)
            if rec is not None:
                records.append(rec)
    if dropped[0]:
        log.warning("dropped %d degenerate/unlabeled boxes from %s", dropped[0], source)
    return records


def _parse_coco(source: Path, aliases: dict[str, str] | None) -> list[AnnotationRecord]:
    try:
        doc = json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedLine(str(source), exc.lineno, f"invalid JSON: {exc.msg}")
    if not isinstance(doc, dict):
        raise MalformedLine(str(source), None, "top-level value is not an object")

    images: dict[object, str] = {}
    for i, img in enumerate(doc.get("images", [])):
        try:
            images[img["id"]] = Path(str(img["file_name"])).stem
        except (KeyError, TypeError):
            raise MalformedLine(str(source), None, f"images[{i}] lacks id/file_name")
    categories: dict[object, str] = {}
    for i, cat in enumerate(doc.get("categories", [])):
        try:
            categories[cat["id"]] = str(cat["name"])
        except (KeyError, TypeError):
            raise MalformedLine(str(source), None, f"categories[{i}] lacks id/name")

    records: list[AnnotationRecord] = []
    dropped = [0]
    for i, ann in enumerate(doc.get("annotations", [])):
        try:
            image_ref = ann["image_id"]
            cat_ref = ann["category_id"]
            x, y, w, h = (float(v) for v in ann["bbox"])
        except (KeyError, TypeError, ValueError):
            raise MalformedLine(str(source), None, f"annotations[{i}] lacks image_id/category_id/bbox")
        if image_ref not in images:
            raise MalformedLine(str(source), None, f"annotations[{i}] references unknown image id {image_ref!r}")
        if cat_ref not in categories:
            raise MalformedLine(str(source), None, f"annotations[{i}] references unknown category id {cat_ref!r}")
        rec = _maybe_record(
            images[image_ref], categories[cat_ref], (x, y, x + w, y + h),
            COCO_JSON, aliases, dropped,
        )
        if rec is not None:
            records.append(rec)
    if dropped[0]:
        log.warning("dropped %d degenerate/unlabeled boxes from %s", dropped[0], source)
    return records


def _parse_yolo(source: Path, aliases: dict[str, str] | None) -> list[AnnotationRecord]:
    if source.is_file():
        directory = source.parent
        files = [source]
    else:
        directory = source
        files = _label_files(directory, skip=frozenset({YOLO_CLASS_FILE}))

    class_path = directory / YOLO_CLASS_FILE
    if not class_path.exists():
        raise MalformedLine(str(class_path), None, "class-map file is missing")
    class_names = [ln.strip() for ln in class_path.read_text(encoding="utf-8").splitlines()]
    class_names = [c for c in class_names if c]

    dims_path = directory / YOLO_DIMS_FILE
    if not dims_path.exists():
        raise MalformedLine(str(dims_path), None, "image-dimension index file is missing")
    try:
        dims = json.loads(dims_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedLine(str(dims_path), exc.lineno, f"invalid JSON: {exc.msg}")

    records: list[AnnotationRecord] = []
    dropped = [0]
    for path in files:
        image_id = path.stem
        if image_id not in dims:
            raise UnknownImageDimension(image_id, str(dims_path))
        try:
            width, height = (float(v) for v in dims[image_id])
        except (TypeError, ValueError):
            raise MalformedLine(str(dims_path), None,
                                f"entry for {image_id!r} is not a [width, height] pair")
        if width <= 0 or height <= 0:
            raise MalformedLine(str(dims_path), None,
                                f"entry for {image_id!r} has non-positive dimensions")
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 5:
                raise MalformedLine(str(path), lineno, f"expected 5 fields, got {len(parts)}")
            try:
                cls_idx = int(parts[0])
                cx, cy, w, h = (float(v) for v in parts[1:])
            except ValueError:
                raise MalformedLine(str(path), lineno, f"non-numeric fields in {parts!r}")
            if not 0 <= cls_idx < len(class_names):
                raise MalformedLine(str(path), lineno, f"class index {cls_idx} not in class map")
            box = (
                (cx - w / 2.0) * width,
                (cy - h / 2.0) * height,
                (cx + w / 2.0) * width,
                (cy + h / 2.0) * height,
            )
            rec = _maybe_record(image_id, class_names[cls_idx], box, YOLO_TXT, aliases, dropped)
            if rec is not None:
                records.append(rec)
    if dropped[0]:
        log.warning("dropped %d degenerate/unlabeled boxes from %s", dropped[0], source)
    return records


# --- interchange -----------------------------------------------------------

def write_interchange(records: list[AnnotationRecord], path: str | Path) -> None:
    """Serialize records as JSON Lines; round-trips through read_interchange."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({
                "image_id": rec.image_id,
                "category": rec.category,
                "bbox": list(rec.bbox),
                "source_format": rec.source_format,
            }) + "\n")


def read_interchange(path: str | Path) -> list[AnnotationRecord]:
    path = Path(path)
    records: list[AnnotationRecord] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
            records.append(AnnotationRecord(
                image_id=str(doc["image_id"]),
                category=str(doc["category"]),
                bbox=tuple(float(v) for v in doc["bbox"]),
                source_format=str(doc["source_format"]),
            ))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}:{lineno}: bad interchange record: {exc}")
    return records
