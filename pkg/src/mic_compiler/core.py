"""Data model shared by every pipeline stage, plus the JSONL record format.

All types are frozen dataclasses. Construction never validates; call
:func:`validate` (or serialize, which validates first) to get the complete
list of violations.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from typing import Any, Literal, Mapping, Optional, Sequence

from .errors import InvariantViolation, ParseError, TemplateError

FORMAT_VERSION = "mic/1"
PROXY_RE = re.compile(r"\[IMG(\d+)\]")
ALLOWED_PLACEHOLDERS = frozenset(
    {"image", "question", "answer", "options", "quadrant", "prompt", "caption0", "caption1"}
)
OPTIONS_SEPARATOR = "; "

AssetKind = Literal["file", "video_frame", "crop"]


def proxy_token(index: int) -> str:
    return f"[IMG{index}]"


@dataclass(frozen=True)
class CropRect:
    """Half-open pixel rectangle ``[x0, x1) x [y0, y1)``."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def fits(self, width: int, height: int) -> bool:
        return self.x1 <= width and self.y1 <= height

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class ImageAssetSpec:
    """Symbolic reference to pixels; nothing here is ever decoded."""

    kind: AssetKind
    uri: str
    frame_index: Optional[int] = None
    rect: Optional[CropRect] = None
    parent: Optional["ImageAssetSpec"] = None
    width: Optional[int] = None
    height: Optional[int] = None
    frame_count: Optional[int] = None

    @classmethod
    def file(cls, uri: str, width: int | None = None, height: int | None = None) -> "ImageAssetSpec":
        return cls("file", uri, width=width, height=height)

    @classmethod
    def video_frame(cls, uri: str, frame_index: int, frame_count: int | None = None) -> "ImageAssetSpec":
        return cls("video_frame", uri, frame_index=frame_index, frame_count=frame_count)

    @classmethod
    def crop(cls, parent: "ImageAssetSpec", rect: CropRect, label: str | None = None) -> "ImageAssetSpec":
        uri = f"{parent.uri}#crop={label}" if label else f"{parent.uri}#crop={','.join(map(str, rect.as_list()))}"
        return cls("crop", uri, rect=rect, parent=parent, width=rect.width, height=rect.height)

    @property
    def bounds(self) -> tuple[int, int] | None:
        if self.width is None or self.height is None:
            return None
        return self.width, self.height


@dataclass(frozen=True)
class Segment:
    kind: Literal["text", "image"]
    text: Optional[str] = None
    proxy_index: Optional[int] = None
    asset: Optional[ImageAssetSpec] = None

    @classmethod
    def of_text(cls, text: str) -> "Segment":
        return cls("text", text=text)

    @classmethod
    def image(cls, proxy_index: int, asset: ImageAssetSpec) -> "Segment":
        return cls("image", proxy_index=proxy_index, asset=asset)

    @property
    def is_image(self) -> bool:
        return self.kind == "image"


@dataclass(frozen=True)
class SourceRecord:
    """One raw annotated example as read from a source dataset.

    ``extras`` carries auxiliary template values such as ``quadrant`` or
    ``caption0`` that some task templates ask for.
    """

    id: str
    dataset: str
    images: tuple[ImageAssetSpec, ...] = ()
    question: Optional[str] = None
    answer: str = ""
    options: Optional[tuple[str, ...]] = None
    entity_boxes: Optional[Mapping[str, CropRect]] = None
    video_frame_count: Optional[int] = None
    extras: Optional[Mapping[str, str]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "images", tuple(self.images))
        if self.options is not None:
            object.__setattr__(self, "options", tuple(self.options))


@dataclass(frozen=True)
class InterleavedInstance:
    id: str
    dataset: str
    segments: tuple[Segment, ...]
    target: str
    n_exemplars: int = 0
    n_images: int = 0
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def text(self) -> str:
        """Concatenation of every text segment."""
        return "".join(s.text for s in self.segments if s.kind == "text")

    @property
    def image_segments(self) -> list[Segment]:
        return [s for s in self.segments if s.kind == "image"]


@dataclass(frozen=True)
class TemplateBank:
    task: str
    templates: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "templates", tuple(self.templates))

    def __len__(self) -> int:
        return len(self.templates)


# -- templates ---------------------------------------------------------------

_FORMATTER = string.Formatter()
# Phrasings that bind a proxy token to the image slot that follows it.
_DECLARATION_PHRASES = (
    "image {k} is [IMG{k}]",
    "image {k}: [IMG{k}]",
    "image {k} labeled [IMG{k}]",
    "image: [IMG{k}]",
)


def parse_template(template: str) -> list[tuple[str, str | None]]:
    """Split a template into ``(literal, placeholder)`` pairs.

    Raises TemplateError on unbalanced braces, format specs, conversions or
    placeholders outside the allowed set.
    """
    try:
        parts = list(_FORMATTER.parse(template))
    except ValueError as exc:
        raise TemplateError(f"unbalanced braces: {exc}") from None
    out = []
    for literal, name, spec, conversion in parts:
        if name is not None:
            if spec or conversion:
                raise TemplateError(f"placeholder {{{name}}} must not carry a format spec or conversion")
            if name not in ALLOWED_PLACEHOLDERS:
                raise TemplateError(f"unknown placeholder {{{name}}}")
        out.append((literal, name))
    return out


def template_problems(template: str) -> list[str]:
    try:
        parts = parse_template(template)
    except TemplateError as exc:
        return [str(exc)]
    problems = []
    k = 0
    before = ""
    for literal, name in parts:
        before += literal
        if name == "image":
            if not before.rstrip().endswith(proxy_token(k)):
                problems.append(f"{{image}} #{k} is not immediately preceded by {proxy_token(k)}")
            elif not any(p.format(k=k) in before for p in _DECLARATION_PHRASES):
                problems.append(f"{{image}} #{k} has no declaration phrase for {proxy_token(k)}")
            k += 1
        if name is not None:
            before += "{" + name + "}"
    return problems


# -- validation --------------------------------------------------------------


def _is_nat(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value >= 0


def validate_rect(rect: CropRect, where: str = "rect") -> list[str]:
    errs = []
    coords = (rect.x0, rect.y0, rect.x1, rect.y1)
    if not all(_is_nat(c) for c in coords):
        return [f"{where}: coordinates must be nonnegative integers, got {coords}"]
    if not rect.x0 < rect.x1:
        errs.append(f"{where}: x0 < x1 violated ({rect.x0} >= {rect.x1})")
    if not rect.y0 < rect.y1:
        errs.append(f"{where}: y0 < y1 violated ({rect.y0} >= {rect.y1})")
    return errs


def validate_asset(asset: ImageAssetSpec, where: str = "asset") -> list[str]:
    errs = []
    if not isinstance(asset.uri, str) or not asset.uri:
        errs.append(f"{where}: uri must be nonempty")
    for name in ("width", "height", "frame_count"):
        value = getattr(asset, name)
        if value is not None and not _is_nat(value):
            errs.append(f"{where}: {name} must be a nonnegative integer")
    if asset.kind == "file":
        if asset.frame_index is not None or asset.rect is not None or asset.parent is not None:
            errs.append(f"{where}: file asset carries frame or crop fields")
    elif asset.kind == "video_frame":
        if not _is_nat(asset.frame_index):
            errs.append(f"{where}: video_frame needs a nonnegative frame_index")
        elif _is_nat(asset.frame_count) and asset.frame_index >= asset.frame_count:
            errs.append(f"{where}: frame_index {asset.frame_index} >= frame_count {asset.frame_count}")
        if asset.rect is not None or asset.parent is not None:
            errs.append(f"{where}: video_frame asset carries crop fields")
    elif asset.kind == "crop":
        if asset.rect is None:
            errs.append(f"{where}: crop needs a rect")
        else:
            errs.extend(validate_rect(asset.rect, f"{where}.rect"))
        if asset.parent is None:
            errs.append(f"{where}: crop needs a parent")
        else:
            errs.extend(validate_asset(asset.parent, f"{where}.parent"))
            bounds = asset.parent.bounds
            if asset.rect is not None and bounds is not None and not asset.rect.fits(*bounds):
                errs.append(f"{where}: rect {asset.rect.as_list()} exceeds parent bounds {bounds}")
        if asset.frame_index is not None:
            errs.append(f"{where}: crop asset carries frame_index")
    else:
        errs.append(f"{where}: unknown kind {asset.kind!r}")
    return errs


def validate_segment(seg: Segment, where: str = "segment") -> list[str]:
    if seg.kind == "text":
        if type(seg.text) is str and seg.text and seg.proxy_index is None and seg.asset is None:
            return []
        errs = []
        if not isinstance(seg.text, str) or not seg.text:
            errs.append(f"{where}: text segment must be a nonempty string")
        if seg.proxy_index is not None or seg.asset is not None:
            errs.append(f"{where}: text segment carries image fields")
        return errs
    if seg.kind == "image":
        errs = []
        if seg.text is not None:
            errs.append(f"{where}: image segment carries text")
        if not _is_nat(seg.proxy_index):
            errs.append(f"{where}: image segment needs a nonnegative proxy_index")
        if seg.asset is None:
            errs.append(f"{where}: image segment needs an asset")
        else:
            errs.extend(validate_asset(seg.asset, f"{where}.asset"))
        return errs
    return [f"{where}: unknown kind {seg.kind!r}"]


def validate_record(record: SourceRecord) -> list[str]:
    errs = []
    if not isinstance(record.id, str) or not record.id:
        errs.append("id must be a nonempty string")
    if not isinstance(record.answer, str):
        errs.append("answer must be a string")
    if record.question is not None and not isinstance(record.question, str):
        errs.append("question must be a string")
    for i, asset in enumerate(record.images):
        errs.extend(validate_asset(asset, f"images[{i}]"))
    if record.options is not None and not all(isinstance(o, str) for o in record.options):
        errs.append("options must be strings")
    if record.video_frame_count is not None and not _is_nat(record.video_frame_count):
        errs.append("video_frame_count must be a nonnegative integer")
    for text in (record.question or "", record.answer, *(record.options or ())):
        if isinstance(text, str) and PROXY_RE.search(text):
            errs.append("source text contains a reserved proxy token [IMGj]")
            break
    if record.entity_boxes is not None:
        bounds = record.images[0].bounds if record.images else None
        for name, rect in record.entity_boxes.items():
            if not isinstance(name, str) or not name.strip() or name != name.strip():
                errs.append(f"entity name {name!r} must be a nonempty token")
                continue
            errs.extend(validate_rect(rect, f"entity_boxes[{name}]"))
            if bounds is not None and not rect.fits(*bounds):
                errs.append(f"entity_boxes[{name}] exceeds image bounds {bounds}")
    return errs


def validate_instance(inst: InterleavedInstance) -> list[str]:
    errs = []
    if not isinstance(inst.id, str) or not inst.id:
        errs.append("id must be a nonempty string")
    if not isinstance(inst.dataset, str):
        errs.append("dataset must be a string")
    if not isinstance(inst.target, str):
        errs.append("target must be a string")
    if not _is_nat(inst.n_exemplars):
        errs.append("n_exemplars must be a nonnegative integer")
    for key, value in inst.meta.items():
        if not isinstance(key, str) or not isinstance(value, str):
            errs.append(f"meta entry {key!r} must map string to string")
    if "format_version" in inst.meta:
        errs.append("meta key 'format_version' is reserved for the wire format")

    proxies = []
    texts = []
    for i, seg in enumerate(inst.segments):
        # Fast path for well-formed segments; anything odd goes through
        # validate_segment for the full message.
        kind = seg.kind
        if kind == "text":
            text = seg.text
            if type(text) is str and text and seg.proxy_index is None and seg.asset is None:
                texts.append(text)
                continue
        elif (
            kind == "image"
            and seg.text is None
            and type(seg.proxy_index) is int
            and seg.proxy_index >= 0
            and seg.asset is not None
            and not validate_asset(seg.asset)
        ):
            proxies.append((i, seg.proxy_index))
            continue
        errs.extend(validate_segment(seg, f"segments[{i}]"))
        if kind == "image" and _is_nat(seg.proxy_index):
            proxies.append((i, seg.proxy_index))
        elif kind == "text" and isinstance(seg.text, str):
            texts.append(seg.text)

    k = sum(1 for s in inst.segments if s.kind == "image")
    if inst.n_images != k:
        errs.append(f"n_images {inst.n_images} != image segment count {k}")
    seen = set()
    for expected, (i, proxy) in enumerate(proxies):
        if proxy in seen:
            errs.append(f"segments[{i}]: duplicate proxy_index {proxy}")
        elif proxy != expected:
            errs.append(f"segments[{i}]: proxy_index {proxy} out of document order (expected {expected})")
        seen.add(proxy)
        prev = inst.segments[i - 1] if i > 0 else None
        token = proxy_token(proxy)
        if prev is None or prev.kind != "text" or not (prev.text or "").rstrip().endswith(token):
            errs.append(f"segments[{i}]: image {proxy} is not preceded by its declaration {token}")

    text = "".join(texts)
    mentioned = {int(m) for m in PROXY_RE.findall(text)}
    for j in range(k):
        if j not in mentioned:
            errs.append(f"proxy token {proxy_token(j)} never appears in text")
    dangling = sorted(m for m in mentioned if m >= k)
    if dangling:
        errs.append(f"text mentions undeclared proxies {[proxy_token(m) for m in dangling]}")
    if isinstance(inst.target, str):
        bad = sorted({int(m) for m in PROXY_RE.findall(inst.target)} - set(range(k)))
        if bad:
            errs.append(f"target mentions undeclared proxies {[proxy_token(m) for m in bad]}")
    return errs


def validate_bank(bank: TemplateBank) -> list[str]:
    errs = []
    if not bank.task:
        errs.append("template bank needs a task name")
    if not bank.templates:
        errs.append(f"bank {bank.task!r} has no templates")
    for i, template in enumerate(bank.templates):
        errs.extend(f"{bank.task}[{i}]: {p}" for p in template_problems(template))
    return errs


_VALIDATORS = {
    CropRect: validate_rect,
    ImageAssetSpec: validate_asset,
    Segment: validate_segment,
    SourceRecord: validate_record,
    InterleavedInstance: validate_instance,
    TemplateBank: validate_bank,
}


def validate(obj: Any) -> list[str]:
    """Return every invariant violation of ``obj`` (empty when valid)."""
    try:
        check = _VALIDATORS[type(obj)]
    except KeyError:
        raise TypeError(f"no validator for {type(obj).__name__}") from None
    return check(obj)


# -- serialization -----------------------------------------------------------


_ENCODER = json.JSONEncoder(ensure_ascii=False, separators=(",", ":"))


def asset_to_dict(asset: ImageAssetSpec) -> dict:
    """Plain-dict form of an asset; keys come out in sorted order."""
    out: dict[str, Any] = {}
    if asset.frame_count is not None:
        out["frame_count"] = asset.frame_count
    if asset.frame_index is not None:
        out["frame_index"] = asset.frame_index
    if asset.height is not None:
        out["height"] = asset.height
    out["kind"] = asset.kind
    if asset.parent is not None:
        out["parent"] = asset_to_dict(asset.parent)
    if asset.rect is not None:
        out["rect"] = asset.rect.as_list()
    out["uri"] = asset.uri
    if asset.width is not None:
        out["width"] = asset.width
    return out


def segment_to_dict(seg: Segment) -> dict:
    if seg.kind == "text":
        return {"kind": "text", "text": seg.text}
    return {"asset": asset_to_dict(seg.asset), "kind": "image", "proxy_index": seg.proxy_index}


def serialize(instance: InterleavedInstance, *, check: bool = True) -> bytes:
    """Encode one instance as a canonical JSON line (UTF-8, newline-terminated).

    Top-level fields keep a fixed order; nested objects have sorted keys.
    ``check=False`` skips validation for callers that just validated.
    """
    if check:
        errs = validate_instance(instance)
        if errs:
            raise InvariantViolation(errs)
    meta = dict(instance.meta)
    meta["format_version"] = FORMAT_VERSION
    record = {
        "id": instance.id,
        "dataset": instance.dataset,
        "segments": [segment_to_dict(s) for s in instance.segments],
        "target": instance.target,
        "n_exemplars": instance.n_exemplars,
        "n_images": instance.n_images,
        "meta": {k: meta[k] for k in sorted(meta)},
    }
    return (_ENCODER.encode(record) + "\n").encode("utf-8")


def _need(obj: dict, key: str, kind: type | tuple[type, ...], where: str) -> Any:
    if key not in obj:
        raise ParseError(f"{where}: missing field {key!r}")
    value = obj[key]
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ParseError(f"{where}: field {key!r} has wrong type {type(value).__name__}")
    return value


def _opt_int(obj: dict, key: str, where: str) -> int | None:
    if obj.get(key) is None:
        return None
    return _need(obj, key, int, where)


def rect_from_list(value: Any, where: str = "rect") -> CropRect:
    if (
        not isinstance(value, list)
        or len(value) != 4
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    ):
        raise ParseError(f"{where}: expected [x0, y0, x1, y1] integers")
    return CropRect(*value)


def asset_from_dict(obj: Any, where: str = "asset") -> ImageAssetSpec:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object")
    kind = _need(obj, "kind", str, where)
    if kind not in ("file", "video_frame", "crop"):
        raise ParseError(f"{where}: unknown asset kind {kind!r}")
    rect = rect_from_list(obj["rect"], f"{where}.rect") if obj.get("rect") is not None else None
    parent = asset_from_dict(obj["parent"], f"{where}.parent") if obj.get("parent") is not None else None
    return ImageAssetSpec(
        kind=kind,
        uri=_need(obj, "uri", str, where),
        frame_index=_opt_int(obj, "frame_index", where),
        rect=rect,
        parent=parent,
        width=_opt_int(obj, "width", where),
        height=_opt_int(obj, "height", where),
        frame_count=_opt_int(obj, "frame_count", where),
    )


def segment_from_dict(obj: Any, where: str = "segment") -> Segment:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object")
    kind = _need(obj, "kind", str, where)
    if kind == "text":
        return Segment.of_text(_need(obj, "text", str, where))
    if kind == "image":
        return Segment.image(_need(obj, "proxy_index", int, where), asset_from_dict(obj.get("asset"), f"{where}.asset"))
    raise ParseError(f"{where}: unknown segment kind {kind!r}")


def deserialize(line: bytes | str) -> InterleavedInstance:
    """Parse one JSON line back into an instance, validating it."""
    if isinstance(line, bytes):
        try:
            text = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError("invalid UTF-8", exc.start) from None
    else:
        text = line
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, len(text[: exc.pos].encode("utf-8"))) from None
    if not isinstance(obj, dict):
        raise ParseError("record must be a JSON object", 0)
    raw_segments = _need(obj, "segments", list, "record")
    meta = dict(_need(obj, "meta", dict, "record"))
    version = meta.pop("format_version", None)
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format_version {version!r}")
    inst = InterleavedInstance(
        id=_need(obj, "id", str, "record"),
        dataset=_need(obj, "dataset", str, "record"),
        segments=tuple(segment_from_dict(s, f"segments[{i}]") for i, s in enumerate(raw_segments)),
        target=_need(obj, "target", str, "record"),
        n_exemplars=_need(obj, "n_exemplars", int, "record"),
        n_images=_need(obj, "n_images", int, "record"),
        meta=meta,
    )
    errs = validate_instance(inst)
    if errs:
        raise InvariantViolation(errs)
    return inst


def join_options(options: Sequence[str]) -> str:
    return OPTIONS_SEPARATOR.join(options)
