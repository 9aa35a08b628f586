"""Streaming readers that turn source JSONL files into SourceRecords.

Input lines are JSON objects with the fields ``id``, ``question``,
``answer`` (required) and ``images``, ``options``, ``entity_boxes``,
``video_frame_count``, ``extras`` (optional). Images are uri strings or
``{"uri", "width", "height"}`` objects; entity boxes map a name to
``[x0, y0, x1, y1]``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Literal, Optional

from .core import CropRect, ImageAssetSpec, SourceRecord, validate_record

Adapter = Literal["generic", "vqa", "video", "entity_boxes"]
Route = Literal["plain", "video", "entity"]
ADAPTERS = ("generic", "vqa", "video", "entity_boxes")
MAX_KEPT_REJECTS = 1000


@dataclass(frozen=True)
class DatasetDescriptor:
    name: str
    adapter: Adapter
    path: str
    task: str
    no_exemplars: Optional[bool] = None
    n_shots: int = 4

    @property
    def skips_exemplars(self) -> bool:
        # Video and entity-crop datasets are built without in-context exemplars
        # unless the manifest says otherwise.
        if self.no_exemplars is not None:
            return self.no_exemplars
        return self.adapter in ("video", "entity_boxes")


@dataclass
class IngestReport:
    dataset: str
    accepted: int = 0
    rejected: int = 0
    rejects: list[tuple[int, str]] = field(default_factory=list)

    @property
    def lines(self) -> int:
        return self.accepted + self.rejected

    def reject(self, line_no: int, reason: str) -> None:
        self.rejected += 1
        if len(self.rejects) < MAX_KEPT_REJECTS:
            self.rejects.append((line_no, reason))

    def merge(self, other: "IngestReport") -> "IngestReport":
        kept = (self.rejects + other.rejects)[:MAX_KEPT_REJECTS]
        return IngestReport(self.dataset, self.accepted + other.accepted, self.rejected + other.rejected, kept)

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "rejects": [{"line": n, "reason": r} for n, r in self.rejects],
        }


class RecordError(ValueError):
    """A source line that cannot become a record; the message is the reason."""


def _image(value, where: str) -> ImageAssetSpec:
    if isinstance(value, str) and value:
        return ImageAssetSpec.file(value)
    if isinstance(value, dict) and isinstance(value.get("uri"), str) and value["uri"]:
        w, h = value.get("width"), value.get("height")
        for v in (w, h):
            if v is not None and (not isinstance(v, int) or isinstance(v, bool) or v < 1):
                raise RecordError(f"{where}: width/height must be positive integers")
        return ImageAssetSpec.file(value["uri"], w, h)
    raise RecordError(f"{where}: expected a uri string or an object with a uri")


def _str_list(value, where: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise RecordError(f"{where} must be a list of strings")
    return tuple(value)


def parse_record(obj, descriptor: DatasetDescriptor) -> SourceRecord:
    """Build and validate one record; raises RecordError with the reject reason."""
    if not isinstance(obj, dict):
        raise RecordError("line is not a JSON object")
    rid = obj.get("id")
    if isinstance(rid, int) and not isinstance(rid, bool):
        rid = str(rid)
    if not isinstance(rid, str) or not rid:
        raise RecordError("missing id")
    if not isinstance(obj.get("question"), str):
        raise RecordError("missing question")
    if not isinstance(obj.get("answer"), str):
        raise RecordError("missing answer")

    raw_images = obj.get("images", [])
    if not isinstance(raw_images, list):
        raise RecordError("images must be a list")
    images = tuple(_image(v, f"images[{i}]") for i, v in enumerate(raw_images))
    options = _str_list(obj["options"], "options") if obj.get("options") is not None else None

    boxes = None
    if obj.get("entity_boxes") is not None:
        raw = obj["entity_boxes"]
        if not isinstance(raw, dict):
            raise RecordError("entity_boxes must be an object")
        boxes = {}
        for name, rect in raw.items():
            if (
                not isinstance(rect, list)
                or len(rect) != 4
                or not all(isinstance(c, int) and not isinstance(c, bool) for c in rect)
            ):
                raise RecordError(f"entity_boxes[{name}] must be [x0, y0, x1, y1] integers")
            boxes[name] = CropRect(*rect)

    frames = obj.get("video_frame_count")
    if frames is not None and (not isinstance(frames, int) or isinstance(frames, bool) or frames < 1):
        raise RecordError("video_frame_count must be a positive integer")

    extras = {}
    raw_extras = obj.get("extras") or {}
    if not isinstance(raw_extras, dict) or not all(isinstance(v, str) for v in raw_extras.values()):
        raise RecordError("extras must map names to strings")
    extras.update(raw_extras)
    for key in ("quadrant", "caption0", "caption1"):
        if isinstance(obj.get(key), str):
            extras[key] = obj[key]

    adapter = descriptor.adapter
    if adapter == "vqa" and not images:
        raise RecordError("missing images")
    if adapter == "video":
        if frames is None:
            raise RecordError("missing frame count")
        if len(images) != 1:
            raise RecordError("video record needs exactly one video uri in images")
    if adapter == "entity_boxes":
        if not boxes:
            raise RecordError("missing entity boxes")
        if len(images) != 1:
            raise RecordError("entity record needs exactly one scene image")

    record = SourceRecord(
        id=rid,
        dataset=descriptor.name,
        images=images,
        question=obj["question"],
        answer=obj["answer"],
        options=options,
        entity_boxes=boxes,
        video_frame_count=frames,
        extras=extras or None,
    )
    errs = validate_record(record)
    if errs:
        raise RecordError(errs[0])
    return record


def _id_key(rid: str) -> int:
    return int.from_bytes(hashlib.blake2b(rid.encode("utf-8"), digest_size=8).digest(), "big")


def ingest(
    descriptor: DatasetDescriptor, *, dedupe: bool = True
) -> tuple[Iterator[SourceRecord], IngestReport]:
    """Open ``descriptor.path`` and return a lazy record stream plus its report.

    The report fills in while the stream is consumed. Bad lines are rejected
    with a reason and never stop the stream. With ``dedupe`` each accepted id
    costs one 64-bit digest of memory; without it memory is constant.
    Raises OSError right away when the file cannot be opened.
    """
    handle = open(descriptor.path, "rb")
    report = IngestReport(descriptor.name)

    def stream() -> Iterator[SourceRecord]:
        seen: set[int] = set()
        with handle:
            for line_no, raw in enumerate(handle, start=1):
                if not raw.strip():
                    report.reject(line_no, "blank line")
                    continue
                try:
                    obj = json.loads(raw)
                except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                    report.reject(line_no, f"malformed JSON: {exc}")
                    continue
                try:
                    record = parse_record(obj, descriptor)
                except RecordError as exc:
                    report.reject(line_no, str(exc))
                    continue
                if dedupe:
                    key = _id_key(record.id)
                    if key in seen:
                        report.reject(line_no, f"duplicate id {record.id!r}")
                        continue
                    seen.add(key)
                report.accepted += 1
                yield record

    return stream(), report


def read_dataset(descriptor: DatasetDescriptor) -> tuple[list[SourceRecord], IngestReport]:
    records, report = ingest(descriptor)
    return list(records), report


def route(record: SourceRecord, descriptor: DatasetDescriptor) -> Route:
    """Pick the construction path for a record."""
    if descriptor.adapter == "video":
        return "video"
    if descriptor.adapter == "entity_boxes":
        return "entity"
    if descriptor.adapter == "generic":
        if record.video_frame_count is not None and len(record.images) == 1:
            return "video"
        if record.entity_boxes and len(record.images) == 1:
            return "entity"
    return "plain"
