"""Multi-image instances built from related images.

Two sources: frames sampled from a video, and entity crops cut out of one
scene whose textual mentions are swapped for the crops.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .core import CropRect, ImageAssetSpec, Segment, SourceRecord, proxy_token, validate_rect
from .errors import RectOutOfBounds

DEFAULT_FRAMES = 8


def select_frames(frame_count: int, k: int = DEFAULT_FRAMES) -> list[int]:
    """Uniform-stride frame indices, first frame of each of ``k`` buckets.

    Videos shorter than ``k`` frames contribute every frame once.
    """
    if frame_count < 1 or k < 1:
        raise ValueError("frame_count and k must be positive")
    if frame_count < k:
        return list(range(frame_count))
    return [j * frame_count // k for j in range(k)]


def expand_video(record: SourceRecord, k: int = DEFAULT_FRAMES) -> SourceRecord:
    """Replace a video record's single video asset by its sampled frames."""
    if record.video_frame_count is None or not record.images:
        raise ValueError(f"record {record.id!r} is not a video record")
    video = record.images[0]
    frames = tuple(
        ImageAssetSpec.video_frame(video.uri, i, record.video_frame_count)
        for i in select_frames(record.video_frame_count, k)
    )
    return replace(record, images=frames)


@dataclass(frozen=True)
class EntityMap:
    """Named boxes over one parent image, in annotation order."""

    entries: Mapping[str, CropRect]
    parent: ImageAssetSpec | None = None

    def problems(self) -> list[str]:
        errs = []
        bounds = self.parent.bounds if self.parent is not None else None
        for name, rect in self.entries.items():
            if not name:
                errs.append("entity names must be nonempty")
            errs.extend(validate_rect(rect, f"entity {name}"))
            if bounds is not None and not rect.fits(*bounds):
                errs.append(f"entity {name}: rect {rect.as_list()} exceeds parent bounds {bounds}")
        return errs


def crop_entities(
    parent: ImageAssetSpec, entities: EntityMap | Mapping[str, CropRect]
) -> dict[str, ImageAssetSpec]:
    entries = entities.entries if isinstance(entities, EntityMap) else entities
    if not entries:
        raise ValueError("crop_entities needs at least one entity")
    bounds = parent.bounds
    crops = {}
    for name, rect in entries.items():
        if bounds is not None and not rect.fits(*bounds):
            raise RectOutOfBounds(f"entity {name}: rect {rect.as_list()} exceeds parent bounds {bounds}")
        crops[name] = ImageAssetSpec.crop(parent, rect, label=name)
    return crops


def entity_pattern(names: Iterable[str]) -> re.Pattern | None:
    names = sorted(set(names), key=lambda n: (-len(n), n))
    if not names:
        return None
    return re.compile(r"(?<!\w)(" + "|".join(map(re.escape, names)) + r")(?!\w)")


def substitute_references(
    text: str, crops: Mapping[str, ImageAssetSpec], first_proxy: int = 0
) -> list[Segment]:
    """Split ``text`` at entity mentions, turning each mention into an image slot.

    Distinct entities get proxies ``first_proxy, first_proxy + 1, ...`` in
    order of first mention; a repeated mention reuses its entity's proxy and
    crop. Text between mentions is kept verbatim.
    """
    pattern = entity_pattern(crops)
    if pattern is None:
        return [Segment.of_text(text)] if text else []
    segments: list[Segment] = []
    proxies: dict[str, int] = {}
    pos = 0
    for m in pattern.finditer(text):
        if m.start() > pos:
            segments.append(Segment.of_text(text[pos : m.start()]))
        name = m.group(1)
        if name not in proxies:
            proxies[name] = first_proxy + len(proxies)
        segments.append(Segment.image(proxies[name], crops[name]))
        pos = m.end()
    if pos < len(text):
        segments.append(Segment.of_text(text[pos:]))
    return segments


def collapse_repeated_mentions(segments: Sequence[Segment]) -> list[Segment]:
    """Keep the first image slot per proxy; later ones become a bare ``[IMGj]`` mention."""
    out = []
    seen = set()
    for seg in segments:
        if seg.kind == "image" and seg.proxy_index in seen:
            out.append(Segment.of_text(proxy_token(seg.proxy_index)))
            continue
        if seg.kind == "image":
            seen.add(seg.proxy_index)
        out.append(seg)
    return out


def mention_order(text: str, names: Iterable[str]) -> list[str]:
    """Entity names in order of first mention in ``text``."""
    pattern = entity_pattern(names)
    if pattern is None:
        return []
    order: dict[str, None] = {}
    for m in pattern.finditer(text):
        order.setdefault(m.group(1), None)
    return list(order)


def replace_mentions(text: str, proxies: Mapping[str, int]) -> str:
    """Rewrite mentions of already-declared entities as their proxy tokens."""
    pattern = entity_pattern(proxies)
    if pattern is None:
        return text
    return pattern.sub(lambda m: proxy_token(proxies[m.group(1)]), text)


@dataclass
class EntityQuestion:
    """Question of an entity-box record with its crops substituted in.

    ``segments`` are locally numbered from 0; ``proxies`` maps each mentioned
    entity to its local proxy.
    """

    segments: list[Segment]
    proxies: dict[str, int]
    unused: list[str] = field(default_factory=list)


def entity_question(record: SourceRecord) -> EntityQuestion:
    """Crop, substitute and collapse the entity mentions of ``record.question``."""
    if not record.images or not record.entity_boxes:
        raise ValueError(f"record {record.id!r} has no entity boxes")
    crops = crop_entities(record.images[0], record.entity_boxes)
    question = record.question or ""
    order = mention_order(question, crops)
    segments = collapse_repeated_mentions(substitute_references(question, crops))
    return EntityQuestion(
        segments=segments,
        proxies={name: i for i, name in enumerate(order)},
        unused=[name for name in crops if name not in set(order)],
    )
