"""Image declarations: unique proxy tokens bound to each image slot."""

from __future__ import annotations

import enum
from typing import Literal, Sequence

from .core import PROXY_RE, ImageAssetSpec, InterleavedInstance, Segment, SourceRecord, proxy_token
from .errors import DoubleDeclaration, PlacementError

Placement = Literal["prefix", "inline"]
DECLARATION_SEPARATOR = ".\n"
IMAGE_PLACEHOLDER = "{image}"


class DeclarationStyle(enum.Enum):
    IS_FORM = "is_form"
    COLON_FORM = "colon_form"

    def render(self, index: int) -> str:
        if self is DeclarationStyle.IS_FORM:
            return f"image {index} is {proxy_token(index)} "
        return f"image {index}: {proxy_token(index)} "


def allocate_proxies(n: int) -> list[int]:
    if n < 0:
        raise ValueError("n must be nonnegative")
    return list(range(n))


def render_declaration(index: int, style: DeclarationStyle, asset: ImageAssetSpec) -> list[Segment]:
    """Declaration text for image ``index`` followed by its image slot."""
    if index < 0:
        raise ValueError("proxy index must be nonnegative")
    return [Segment.of_text(style.render(index)), Segment.image(index, asset)]


def _is_bound(segments: Sequence[Segment], i: int) -> bool:
    prev = segments[i - 1] if i > 0 else None
    token = proxy_token(segments[i].proxy_index)
    return prev is not None and prev.kind == "text" and prev.text.rstrip().endswith(token)


def declare_segments(segments: Sequence[Segment], style: DeclarationStyle = DeclarationStyle.IS_FORM) -> list[Segment]:
    """Replace every bare image slot in an interleaved sequence by its declaration.

    Images are numbered in document order; an image segment that reappears
    with an already-used proxy is an error (collapse repeats first).
    """
    out: list[Segment] = []
    seen: dict[int, int] = {}
    for i, seg in enumerate(segments):
        if seg.kind != "image":
            out.append(seg)
            continue
        if _is_bound(segments, i):
            raise DoubleDeclaration(f"image {seg.proxy_index} is already declared")
        if seg.proxy_index in seen:
            raise DoubleDeclaration(f"image {seg.proxy_index} appears twice; collapse repeated mentions first")
        index = len(seen)
        seen[seg.proxy_index] = index
        out.extend(render_declaration(index, style, seg.asset))
    return out


def declare_images(
    record: SourceRecord,
    style: DeclarationStyle = DeclarationStyle.IS_FORM,
    placement: Placement = "prefix",
) -> InterleavedInstance:
    """Declare every image of ``record`` and return a query-only instance.

    With ``prefix`` placement the declarations come first, each followed by
    ``".\\n"``, then the question. With ``inline`` placement the question's
    ``{image}`` placeholders are replaced in order.
    """
    question = record.question or ""
    if PROXY_RE.search(question):
        raise DoubleDeclaration(f"record {record.id!r} already carries proxy tokens")
    segments: list[Segment] = []
    if placement == "prefix":
        for j, asset in zip(allocate_proxies(len(record.images)), record.images):
            segments.extend(render_declaration(j, style, asset))
            segments.append(Segment.of_text(DECLARATION_SEPARATOR))
        if question:
            segments.append(Segment.of_text(question))
    elif placement == "inline":
        pieces = question.split(IMAGE_PLACEHOLDER)
        slots = len(pieces) - 1
        if slots != len(record.images):
            raise PlacementError(
                f"record {record.id!r} has {len(record.images)} images but {slots} {IMAGE_PLACEHOLDER} placeholders"
            )
        for j, piece in enumerate(pieces):
            if piece:
                segments.append(Segment.of_text(piece))
            if j < slots:
                segments.extend(render_declaration(j, style, record.images[j]))
    else:
        raise ValueError(f"unknown placement {placement!r}")
    return InterleavedInstance(
        id=record.id,
        dataset=record.dataset,
        segments=tuple(segments),
        target=record.answer,
        n_exemplars=0,
        n_images=len(record.images),
    )
