"""Readers and writers for annotations, proposals, coverage reports and sweep curves.

Annotation document (JSON)::

    {"version": "1", "name": "...",
     "images": [{"id": "img1", "width": 640, "height": 480,
                 "objects": [{"class": "adidas", "bbox": [x, y, w, h]}],
                 "provenance": {"source_id": "...", "crop": [x, y, w, h], "scale": 1.0}}]}

``name`` and ``provenance`` are optional. Proposals are CSV with header
``image_id,score,x,y,w,h`` plus an optional ``level`` column.

Reports and curves are written with every real number at 6 decimals and
sorted JSON keys, so equal inputs give byte-identical files. Annotation
documents keep full float precision so rescaled geometry survives a round
trip.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
import xml.etree.ElementTree as ET
from typing import Any, Iterable, Mapping, Sequence

import jsonschema

from .coverage import CoverageReport, GtResult, SweepCurve
from .dataset import Dataset, GroundtruthObject, ImageAnnotation, Provenance
from .geometry import Box
from .proposals import ProposalSet, ScoredBox

FORMAT_VERSION = "1"
SUPPORTED_VERSIONS = ("1",)
PROPOSAL_FIELDS = ("image_id", "score", "x", "y", "w", "h")


class ParseError(ValueError):
    """Input document violates syntax, schema or a geometric invariant."""

    def __init__(self, message: str, source: str = "<input>", location: str | None = None,
                 image_id: str | None = None):
        self.source = source
        self.location = location
        self.image_id = image_id
        parts = [source]
        if location:
            parts.append(location)
        if image_id is not None:
            parts.append(f"image {image_id!r}")
        super().__init__(": ".join(parts) + ": " + message)


_NUM = {"type": "number"}
_BBOX = {"type": "array", "items": _NUM, "minItems": 4, "maxItems": 4}

ANNOTATION_SCHEMA = {
    "type": "object",
    "required": ["version", "images"],
    "additionalProperties": False,
    "properties": {
        "version": {"type": "string"},
        "name": {"type": "string"},
        "images": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "width", "height", "objects"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "width": _NUM,
                    "height": _NUM,
                    "objects": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["class", "bbox"],
                            "additionalProperties": False,
                            "properties": {"class": {"type": "string", "minLength": 1}, "bbox": _BBOX},
                        },
                    },
                    "provenance": {
                        "type": "object",
                        "required": ["source_id", "crop", "scale"],
                        "additionalProperties": False,
                        "properties": {"source_id": {"type": "string"}, "crop": _BBOX, "scale": _NUM},
                    },
                },
            },
        },
    },
}


def _json_path(parts: Iterable[Any]) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _reject_constant(name):
    raise ValueError(f"non-finite number {name} is not allowed")


def _decode(data: bytes | str, source: str) -> str:
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError(f"invalid UTF-8 at byte offset {e.start}", source) from None
    return data


def parse_annotations(data: bytes | str, source: str = "<input>") -> Dataset:
    text = _decode(data, source)
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ParseError(f"JSON syntax error: {e.msg}", source, f"line {e.lineno} column {e.colno} (offset {e.pos})") from None
    except ValueError as e:
        raise ParseError(str(e), source) from None

    validator = jsonschema.Draft202012Validator(ANNOTATION_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        image_id = None
        if len(path) >= 2 and path[0] == "images" and isinstance(path[1], int):
            img = doc["images"][path[1]]
            if isinstance(img, dict) and isinstance(img.get("id"), str):
                image_id = img["id"]
        raise ParseError(f"schema violation: {err.message}", source, _json_path(path), image_id)

    if doc["version"] not in SUPPORTED_VERSIONS:
        raise ParseError(f"unsupported version {doc['version']!r}; expected one of {SUPPORTED_VERSIONS}",
                         source, "$.version")

    images = []
    seen: set[str] = set()
    for i, rec in enumerate(doc["images"]):
        image_id = rec["id"]
        where = f"$.images[{i}]"
        if image_id in seen:
            raise ParseError(f"duplicate image id {image_id!r}", source, f"{where}.id", image_id)
        seen.add(image_id)
        objs = []
        for k, o in enumerate(rec["objects"]):
            try:
                objs.append(GroundtruthObject(o["class"], Box(*o["bbox"])))
            except ValueError as e:
                raise ParseError(str(e), source, f"{where}.objects[{k}].bbox", image_id) from None
        prov = None
        if "provenance" in rec:
            p = rec["provenance"]
            if not p["scale"] > 0:
                raise ParseError("provenance scale must be positive", source, f"{where}.provenance.scale", image_id)
            prov = Provenance(p["source_id"], tuple(float(v) for v in p["crop"]), float(p["scale"]))
        try:
            images.append(ImageAnnotation(image_id, float(rec["width"]), float(rec["height"]), tuple(objs), prov))
        except ValueError as e:
            raise ParseError(str(e), source, where, image_id) from None
    return Dataset(doc.get("name", source), images)


def annotations_to_dict(ds: Dataset) -> dict:
    images = []
    for img in ds.images:
        rec = {
            "id": img.image_id,
            "width": img.width,
            "height": img.height,
            "objects": [{"class": o.class_name, "bbox": list(o.box.as_tuple())} for o in img.objects],
        }
        if img.provenance is not None:
            p = img.provenance
            rec["provenance"] = {"source_id": p.source_id, "crop": list(p.crop), "scale": p.scale}
        images.append(rec)
    return {"version": FORMAT_VERSION, "name": ds.name, "images": images}


def write_annotations(ds: Dataset) -> bytes:
    return (json.dumps(annotations_to_dict(ds), sort_keys=True, indent=1) + "\n").encode("utf-8")


# --- proposals -------------------------------------------------------------


def parse_proposals(data: bytes | str, source: str = "<input>") -> dict[str, ProposalSet]:
    """Group proposal rows by image id, keeping row order within each image."""
    text = _decode(data, source)
    reader = csv.reader(_io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file; expected a header row", source, "line 1") from None
    except csv.Error as e:
        raise ParseError(f"CSV syntax error: {e}", source, "line 1") from None
    header = [h.strip() for h in header]
    if tuple(header[:6]) != PROPOSAL_FIELDS or len(header) > 7 or (len(header) == 7 and header[6] != "level"):
        raise ParseError(f"header must be {','.join(PROPOSAL_FIELDS)}[,level], got {','.join(header)}",
                         source, "line 1")
    has_level = len(header) == 7
    grouped: dict[str, list[ScoredBox]] = {}
    while True:
        try:
            row = next(reader)
        except StopIteration:
            break
        except csv.Error as e:
            raise ParseError(f"CSV syntax error: {e}", source, f"line {reader.line_num}") from None
        line = f"line {reader.line_num}"
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", source, line)
        image_id = row[0].strip()
        if not image_id:
            raise ParseError("field 'image_id' is empty", source, line)
        nums = []
        for name, cell in zip(PROPOSAL_FIELDS[1:], row[1:6]):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"field {name!r} is not a number: {cell!r}", source, line, image_id) from None
            if not math.isfinite(v):
                raise ParseError(f"field {name!r} must be finite, got {cell!r}", source, line, image_id)
            nums.append(v)
        score, x, y, w, h = nums
        if w <= 0 or h <= 0:
            raise ParseError(f"box size must be positive, got w={w:g} h={h:g}", source, line, image_id)
        level = (row[6].strip() or None) if has_level else None
        grouped.setdefault(image_id, []).append(ScoredBox(Box(x, y, w, h), score, level))
    return {k: ProposalSet(k, v) for k, v in grouped.items()}


def write_proposals(sets: Mapping[str, Sequence[ScoredBox]] | Iterable[ProposalSet]) -> bytes:
    """Proposal CSV; the level column is emitted when any item carries a level."""
    if isinstance(sets, Mapping):
        items = [(k, list(v.items) if isinstance(v, ProposalSet) else list(v)) for k, v in sets.items()]
    else:
        items = [(s.image_id, list(s.items)) for s in sets]
    with_level = any(it.level is not None for _, group in items for it in group)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(PROPOSAL_FIELDS + (("level",) if with_level else ()))
    for image_id, group in items:
        for it in group:
            b = it.box
            row = [image_id] + [_f(v) for v in (it.score, b.x, b.y, b.w, b.h)]
            if with_level:
                row.append(it.level or "")
            w.writerow(row)
    return buf.getvalue().encode("utf-8")


# --- reports ---------------------------------------------------------------


def _f(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def _dump(obj: Any) -> str:
    # minimal JSON emitter: sorted keys, fixed 6-decimal reals
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_dump(obj[k])}" for k in sorted(obj)) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_dump(v) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _f(obj)
    return json.dumps(obj)


def _box_list(b: Box | None):
    return None if b is None else [float(v) for v in b.as_tuple()]


def report_to_dict(report: CoverageReport) -> dict:
    return {
        "mabo": float(report.mabo),
        "recall": float(report.recall),
        "iou_threshold": float(report.iou_threshold),
        "n_gt": report.n_gt,
        "per_class": {c: {"abo": float(a), "n_gt": n} for c, (a, n) in report.per_class.items()},
        "per_gt": [
            {
                "image_id": r.image_id,
                "class": r.class_name,
                "box": _box_list(r.box),
                "best_iou": float(r.best_iou),
                "best_box": _box_list(r.best_box),
            }
            for r in report.per_gt
        ],
    }


def write_report(report: CoverageReport, fmt: str = "json") -> bytes:
    if fmt == "json":
        return (_dump(report_to_dict(report)) + "\n").encode("utf-8")
    if fmt == "csv":
        return report_csv(report)
    raise ValueError(f"unknown report format {fmt!r}; expected 'json' or 'csv'")


def report_csv(report: CoverageReport) -> bytes:
    """Per-class table plus a summary row (``class`` = ``MABO``)."""
    hits: dict[str, int] = {}
    for r in report.per_gt:
        hits[r.class_name] = hits.get(r.class_name, 0) + (r.best_iou >= report.iou_threshold)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["class", "abo", "n_gt", "recall"])
    for c, (abo, n) in report.per_class.items():
        w.writerow([c, _f(abo), n, _f(hits.get(c, 0) / n if n else 0.0)])
    w.writerow(["MABO", _f(report.mabo), report.n_gt, _f(report.recall)])
    return buf.getvalue().encode("utf-8")


def parse_report(data: bytes | str, source: str = "<input>") -> CoverageReport:
    text = _decode(data, source)
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"JSON syntax error: {e.msg}", source, f"line {e.lineno} column {e.colno}") from None
    try:
        per_gt = tuple(
            GtResult(
                r["image_id"],
                r["class"],
                Box(*r["box"]),
                float(r["best_iou"]),
                None if r["best_box"] is None else Box(*r["best_box"]),
            )
            for r in d["per_gt"]
        )
        per_class = {c: (float(v["abo"]), int(v["n_gt"])) for c, v in d["per_class"].items()}
        return CoverageReport(per_class, float(d["mabo"]), float(d["recall"]), float(d["iou_threshold"]), per_gt)
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"malformed report: {e!r}", source) from None


def write_curves(curves: Sequence[SweepCurve]) -> bytes:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["anchor_scale", "object_size", "mabo"])
    for c in curves:
        for x, m in c.points:
            w.writerow([_f(c.anchor_scale), _f(x), _f(m)])
    return buf.getvalue().encode("utf-8")


def parse_curves(data: bytes | str, source: str = "<input>") -> list[SweepCurve]:
    text = _decode(data, source)
    reader = csv.reader(_io.StringIO(text, newline=""))
    header = next(reader, None)
    if header != ["anchor_scale", "object_size", "mabo"]:
        raise ParseError("header must be anchor_scale,object_size,mabo", source, "line 1")
    curves: dict[float, list[tuple[float, float]]] = {}
    for row in reader:
        if not row:
            continue
        try:
            s, x, m = (float(v) for v in row)
        except ValueError:
            raise ParseError(f"malformed row {row!r}", source, f"line {reader.line_num}") from None
        curves.setdefault(s, []).append((x, m))
    return [SweepCurve(s, tuple(p)) for s, p in curves.items()]


def write_scalar(v: float) -> bytes:
    return (_f(v) + "\n").encode("utf-8")


# --- VOC conversion --------------------------------------------------------


def parse_voc_xml(data: bytes | str, source: str = "<input>") -> ImageAnnotation:
    """Read one VOC-style annotation file (``xmin/ymin/xmax/ymax`` boxes)."""
    try:
        root = ET.fromstring(data)
    except ET.ParseError as e:
        line, col = e.position
        raise ParseError(f"XML syntax error: {e}", source, f"line {line} column {col}") from None

    def text(node, tag, where):
        el = node.find(tag)
        if el is None or el.text is None or not el.text.strip():
            raise ParseError(f"missing <{tag}>", source, where)
        return el.text.strip()

    def num(node, tag, where):
        raw = text(node, tag, where)
        try:
            v = float(raw)
        except ValueError:
            raise ParseError(f"<{tag}> is not a number: {raw!r}", source, where) from None
        if not math.isfinite(v):
            raise ParseError(f"<{tag}> must be finite", source, where)
        return v

    fname = root.findtext("filename")
    image_id = (fname or source).strip()
    size = root.find("size")
    if size is None:
        raise ParseError("missing <size>", source, "annotation/size", image_id)
    width, height = num(size, "width", "annotation/size"), num(size, "height", "annotation/size")
    objs = []
    for k, o in enumerate(root.findall("object")):
        where = f"annotation/object[{k}]"
        name = text(o, "name", where)
        bb = o.find("bndbox")
        if bb is None:
            raise ParseError("missing <bndbox>", source, where, image_id)
        x1, y1 = num(bb, "xmin", where), num(bb, "ymin", where)
        x2, y2 = num(bb, "xmax", where), num(bb, "ymax", where)
        try:
            objs.append(GroundtruthObject(name, Box(x1, y1, x2 - x1, y2 - y1)))
        except ValueError as e:
            raise ParseError(str(e), source, f"{where}/bndbox", image_id) from None
    try:
        return ImageAnnotation(image_id, width, height, tuple(objs))
    except ValueError as e:
        raise ParseError(str(e), source, "annotation", image_id) from None
