"""The annotation corpus: per-image feature descriptors plus the
specialty / class / sub-class / keyword records physicians attach to them.

Persistence is a documented, diff-able file format rather than a DBMS:

    <corpus file>            header line "hannot/1", then one JSON object
                             per line ({"kind": "params" | "image" |
                             "annotation", ...}) with keys in fixed order
    <corpus file>.d/         one "<image_id>.pts" per image: "width height"
                             on the first line, then one "x y" pair per
                             line, sorted by (y, x)

Saving is canonical (sorted entries, fixed key order, UTF-8), so the same
store always serializes to the same bytes and save -> load round-trips to
a structurally identical store.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .errors import (
    CorpusIOError,
    FingerprintMismatchError,
    IdConflictError,
    InvalidRecordError,
    SchemaError,
    UnknownImageError,
)
from .geometry import PointSet
from .image import ExtractionParams, FeatureDescriptor

__all__ = [
    "AnnotationRecord",
    "ImageEntry",
    "CorpusFilter",
    "RegisterResult",
    "Store",
    "load_corpus",
    "save_corpus",
    "content_hash",
    "format_timestamp",
    "parse_timestamp",
    "utc_now",
]

FORMAT_VERSION = "hannot/1"

_ID_PATTERN = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
_TIMESTAMP_PATTERN = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$")


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def utc_now() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    if not _TIMESTAMP_PATTERN.match(text):
        raise ValueError(f"timestamp must look like 2024-01-31T12:00:00Z, got {text!r}")
    return datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)


def _canon(text: str) -> str:
    """Comparison key for specialty / class / sub-class matching."""
    return text.strip().casefold()


@dataclass(frozen=True)
class AnnotationRecord:
    """One physician's annotation of one image at one time.

    ``class_name`` and ``sub_class`` may be empty (unclassified); keywords
    are kept verbatim. (image_id, physician_id, created_at) identifies the
    record: the same image may carry annotations from several physicians.
    """

    image_id: str
    specialty: str
    class_name: str
    sub_class: str
    keywords: tuple[str, ...]
    physician_id: str
    created_at: datetime

    def __post_init__(self):
        for name in ("image_id", "specialty", "physician_id"):
            if not getattr(self, name).strip():
                raise InvalidRecordError(name, "must not be blank")
        object.__setattr__(self, "keywords", tuple(self.keywords))
        if not self.keywords:
            raise InvalidRecordError("keywords", "must not be empty")
        for kw in self.keywords:
            if not kw.strip():
                raise InvalidRecordError("keywords", "keywords must not be blank")
        if self.created_at.tzinfo is None:
            raise InvalidRecordError("created_at", "timestamp must be timezone-aware")
        object.__setattr__(
            self,
            "created_at",
            self.created_at.astimezone(timezone.utc).replace(microsecond=0),
        )

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.image_id, self.physician_id, format_timestamp(self.created_at))

    def to_wire(self) -> dict:
        return {
            "image_id": self.image_id,
            "specialty": self.specialty,
            "class_name": self.class_name,
            "sub_class": self.sub_class,
            "keywords": list(self.keywords),
            "physician_id": self.physician_id,
            "created_at": format_timestamp(self.created_at),
        }


@dataclass(frozen=True)
class ImageEntry:
    """A registered image: its descriptor, provenance, and duplicate-detection hash."""

    image_id: str
    descriptor: FeatureDescriptor
    source_path: str
    content_hash: str

    def __post_init__(self):
        if not _ID_PATTERN.match(self.image_id):
            raise InvalidRecordError(
                "image_id",
                f"{self.image_id!r} must contain only letters, digits, '.', '_' or '-'",
            )


@dataclass(frozen=True)
class CorpusFilter:
    """Candidate pre-filter: specialty is always fixed, class levels optional.

    Matching is exact but case-insensitive after trimming.
    """

    specialty: str
    class_name: str | None = None
    sub_class: str | None = None

    def __post_init__(self):
        if not self.specialty.strip():
            raise ValueError("filter specialty must not be blank")

    def matches(self, record: AnnotationRecord) -> bool:
        if _canon(record.specialty) != _canon(self.specialty):
            return False
        if self.class_name is not None and _canon(record.class_name) != _canon(self.class_name):
            return False
        if self.sub_class is not None and _canon(record.sub_class) != _canon(self.sub_class):
            return False
        return True


@dataclass(frozen=True)
class RegisterResult:
    added: bool
    image_id: str

    @property
    def duplicate_of(self) -> str | None:
        return None if self.added else self.image_id


def _record_sort_key(record: AnnotationRecord):
    return (record.image_id, format_timestamp(record.created_at), record.physician_id)


class Store:
    """In-memory corpus with single-writer mutation semantics.

    Queries never mutate; callers serialize register/add themselves (the
    CLI is single-threaded, the service holds a lock around mutations).
    """

    def __init__(self, params: ExtractionParams | None = None):
        self.params = params or ExtractionParams()
        self._images: dict[str, ImageEntry] = {}
        self._records: dict[str, list[AnnotationRecord]] = {}
        self._hash_to_id: dict[str, str] = {}

    # introspection

    def __len__(self) -> int:
        return len(self._images)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Store):
            return NotImplemented
        return (
            self.params == other.params
            and self._images == other._images
            and self.all_records() == other.all_records()
        )

    def image_ids(self) -> list[str]:
        return sorted(self._images)

    def has_image(self, image_id: str) -> bool:
        return image_id in self._images

    def entry(self, image_id: str) -> ImageEntry:
        try:
            return self._images[image_id]
        except KeyError:
            raise UnknownImageError(f"no image {image_id!r} in the corpus") from None

    def records_for(self, image_id: str) -> list[AnnotationRecord]:
        self.entry(image_id)
        return sorted(self._records.get(image_id, []), key=_record_sort_key)

    def all_records(self) -> list[AnnotationRecord]:
        out = []
        for records in self._records.values():
            out.extend(records)
        return sorted(out, key=_record_sort_key)

    # mutation

    def register_image(self, entry: ImageEntry) -> RegisterResult:
        """Add an image unless its bytes are already present.

        Identical content (by hash) is reported as a duplicate of the prior
        id and nothing is stored; the same id with different content is an
        ID_CONFLICT.
        """
        existing_id = self._hash_to_id.get(entry.content_hash)
        if existing_id is not None:
            return RegisterResult(added=False, image_id=existing_id)
        if entry.image_id in self._images:
            raise IdConflictError(
                f"image id {entry.image_id!r} already registered with different content"
            )
        if entry.descriptor.params_fingerprint != self.params.fingerprint:
            raise FingerprintMismatchError(
                "descriptor was extracted with different parameters than this corpus"
            )
        self._images[entry.image_id] = entry
        self._hash_to_id[entry.content_hash] = entry.image_id
        return RegisterResult(added=True, image_id=entry.image_id)

    def add_annotation(self, record: AnnotationRecord) -> AnnotationRecord:
        """Append a record; re-adding the identical record is a no-op.

        A record that collides on (image_id, physician_id, created_at) with
        different content is rejected.
        """
        if record.image_id not in self._images:
            raise UnknownImageError(f"no image {record.image_id!r} in the corpus")
        for existing in self._records.get(record.image_id, []):
            if existing.key == record.key:
                if existing == record:
                    return existing
                raise InvalidRecordError(
                    "created_at",
                    "a different record with the same (image_id, physician_id, created_at) exists",
                )
        self._records.setdefault(record.image_id, []).append(record)
        return record

    # queries

    def query_candidates(self, filt: CorpusFilter) -> list[tuple[ImageEntry, list[AnnotationRecord]]]:
        """Entries with at least one record matching every set filter field.

        Each hit comes with all of the image's records, ordered by image_id
        for determinism. An empty result is a valid answer.
        """
        out = []
        for image_id in self.image_ids():
            records = self._records.get(image_id, [])
            if any(filt.matches(r) for r in records):
                out.append((self._images[image_id], sorted(records, key=_record_sort_key)))
        return out

    def specialty_hierarchy(self) -> list[dict]:
        """Sorted specialty -> class -> sub-class tree derived from the records.

        Names that differ only by case collapse to one node displayed with
        the lexicographically smallest spelling.
        """
        tree: dict[str, dict] = {}
        for record in self.all_records():
            spec = tree.setdefault(_canon(record.specialty), {"names": set(), "classes": {}})
            spec["names"].add(record.specialty.strip())
            if not record.class_name.strip():
                continue
            cls = spec["classes"].setdefault(
                _canon(record.class_name), {"names": set(), "subs": set()}
            )
            cls["names"].add(record.class_name.strip())
            if record.sub_class.strip():
                cls["subs"].add(record.sub_class.strip())
        out = []
        for spec in tree.values():
            classes = []
            for cls in spec["classes"].values():
                classes.append(
                    {
                        "name": min(cls["names"]),
                        "sub_classes": sorted(cls["subs"], key=lambda s: (s.casefold(), s)),
                    }
                )
            classes.sort(key=lambda c: (c["name"].casefold(), c["name"]))
            out.append({"name": min(spec["names"]), "classes": classes})
        out.sort(key=lambda s: (s["name"].casefold(), s["name"]))
        return out


# persistence

def _descriptor_dir(path) -> Path:
    return Path(str(path) + ".d")


def _params_line(params: ExtractionParams) -> dict:
    return {
        "kind": "params",
        "max_dimension": params.max_dimension,
        "gradient_threshold": params.gradient_threshold,
        "max_points": params.max_points,
    }


def _image_line(entry: ImageEntry) -> dict:
    return {
        "kind": "image",
        "image_id": entry.image_id,
        "source_path": entry.source_path,
        "content_hash": entry.content_hash,
        "source_width": entry.descriptor.source_width,
        "source_height": entry.descriptor.source_height,
        "params_fingerprint": entry.descriptor.params_fingerprint,
    }


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def save_corpus(store: Store, path) -> None:
    """Write the canonical corpus file plus the descriptor sidecar directory."""
    path = Path(path)
    lines = [FORMAT_VERSION, _dump_line(_params_line(store.params))]
    for image_id in store.image_ids():
        lines.append(_dump_line(_image_line(store.entry(image_id))))
    for record in store.all_records():
        lines.append(_dump_line({"kind": "annotation", **record.to_wire()}))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
        os.replace(tmp, path)

        ddir = _descriptor_dir(path)
        ddir.mkdir(exist_ok=True)
        wanted = set()
        for image_id in store.image_ids():
            desc = store.entry(image_id).descriptor
            name = image_id + ".pts"
            wanted.add(name)
            rows = [f"{desc.source_width} {desc.source_height}"]
            rows.extend(f"{x} {y}" for x, y in zip(desc.points.xs.tolist(), desc.points.ys.tolist()))
            (ddir / name).write_text("\n".join(rows) + "\n", encoding="ascii")
        for stale in ddir.glob("*.pts"):
            if stale.name not in wanted:
                stale.unlink()
    except OSError as exc:
        raise CorpusIOError(f"cannot write corpus at {path}: {exc}") from exc


def _load_descriptor(ddir: Path, image_id: str, width: int, height: int, fingerprint: str) -> FeatureDescriptor:
    pts_path = ddir / (image_id + ".pts")
    try:
        text = pts_path.read_text(encoding="ascii")
    except OSError as exc:
        raise SchemaError(f"missing descriptor file {pts_path}: {exc}") from exc
    rows = text.splitlines()
    if not rows:
        raise SchemaError(f"{pts_path}: empty descriptor file")
    try:
        w, h = (int(v) for v in rows[0].split())
        coords = [tuple(int(v) for v in row.split()) for row in rows[1:] if row.strip()]
    except ValueError as exc:
        raise SchemaError(f"{pts_path}: malformed descriptor: {exc}") from exc
    if (w, h) != (width, height):
        raise SchemaError(
            f"{pts_path}: dimensions {w}x{h} disagree with corpus entry {width}x{height}"
        )
    if any(len(c) != 2 for c in coords):
        raise SchemaError(f"{pts_path}: every point line must be 'x y'")
    try:
        points = PointSet(coords)
    except Exception as exc:
        raise SchemaError(f"{pts_path}: invalid point set: {exc}") from exc
    try:
        return FeatureDescriptor(points, width, height, fingerprint)
    except ValueError as exc:
        raise SchemaError(f"{pts_path}: {exc}") from exc


def _require_fields(obj: dict, fields: tuple[str, ...], lineno: int) -> None:
    for name in fields:
        if name not in obj:
            raise SchemaError(f"line {lineno}: missing field '{name}'")


def load_corpus(path) -> Store:
    """Parse a corpus file; malformed content raises SCHEMA_ERROR with the line."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusIOError(f"cannot read corpus at {path}: {exc}") from exc

    lines = text.splitlines()
    if not lines or lines[0] != FORMAT_VERSION:
        raise SchemaError(f"line 1: expected header {FORMAT_VERSION!r}")

    store: Store | None = None
    ddir = _descriptor_dir(path)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict) or "kind" not in obj:
            raise SchemaError(f"line {lineno}: missing field 'kind'")
        kind = obj["kind"]

        if kind == "params":
            if store is not None:
                raise SchemaError(f"line {lineno}: duplicate params record")
            _require_fields(obj, ("max_dimension", "gradient_threshold", "max_points"), lineno)
            try:
                params = ExtractionParams(
                    max_dimension=obj["max_dimension"],
                    gradient_threshold=obj["gradient_threshold"],
                    max_points=obj["max_points"],
                )
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"line {lineno}: invalid params: {exc}") from exc
            store = Store(params)
            continue

        if store is None:
            raise SchemaError(f"line {lineno}: params record must come first")

        if kind == "image":
            _require_fields(
                obj,
                ("image_id", "source_path", "content_hash", "source_width",
                 "source_height", "params_fingerprint"),
                lineno,
            )
            if obj["params_fingerprint"] != store.params.fingerprint:
                raise SchemaError(
                    f"line {lineno}: descriptor fingerprint disagrees with corpus params"
                )
            descriptor = _load_descriptor(
                ddir, obj["image_id"], obj["source_width"], obj["source_height"],
                obj["params_fingerprint"],
            )
            try:
                entry = ImageEntry(
                    image_id=obj["image_id"],
                    descriptor=descriptor,
                    source_path=obj["source_path"],
                    content_hash=obj["content_hash"],
                )
                result = store.register_image(entry)
            except (InvalidRecordError, IdConflictError, TypeError) as exc:
                raise SchemaError(f"line {lineno}: {exc}") from exc
            if not result.added:
                raise SchemaError(f"line {lineno}: duplicate content hash")
        elif kind == "annotation":
            _require_fields(
                obj,
                ("image_id", "specialty", "class_name", "sub_class", "keywords",
                 "physician_id", "created_at"),
                lineno,
            )
            try:
                record = AnnotationRecord(
                    image_id=obj["image_id"],
                    specialty=obj["specialty"],
                    class_name=obj["class_name"],
                    sub_class=obj["sub_class"],
                    keywords=tuple(obj["keywords"]),
                    physician_id=obj["physician_id"],
                    created_at=parse_timestamp(obj["created_at"]),
                )
                store.add_annotation(record)
            except (InvalidRecordError, UnknownImageError, ValueError, TypeError) as exc:
                raise SchemaError(f"line {lineno}: {exc}") from exc
        else:
            raise SchemaError(f"line {lineno}: unknown record kind {kind!r}")

    if store is None:
        raise SchemaError("line 2: missing params record")
    return store
