"""Token-level layout of an interleaved instance, simulated without a model.

Text segments occupy as many positions as the tokenizer counts; every image
occupies a fixed block of visual slots right after the text that declares it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal, Optional

from .core import InterleavedInstance, proxy_token

DEFAULT_SLOTS = 32

Tokenizer = Callable[[str], int]


def whitespace_tokens(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class Block:
    kind: Literal["text", "visual"]
    start: int
    length: int
    proxy: Optional[int] = None

    @property
    def end(self) -> int:
        return self.start + self.length

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "start": self.start, "length": self.length}
        if self.proxy is not None:
            out["proxy"] = self.proxy
        return out


@dataclass(frozen=True)
class LayoutReport:
    blocks: tuple[Block, ...]
    total_length: int
    visual_slots_per_image: int = DEFAULT_SLOTS

    @property
    def visual_tokens(self) -> int:
        return sum(b.length for b in self.blocks if b.kind == "visual")

    @property
    def text_tokens(self) -> int:
        return sum(b.length for b in self.blocks if b.kind == "text")

    def to_dict(self) -> dict:
        return {
            "total_length": self.total_length,
            "text_tokens": self.text_tokens,
            "visual_tokens": self.visual_tokens,
            "visual_slots_per_image": self.visual_slots_per_image,
            "blocks": [b.to_dict() for b in self.blocks],
        }


def simulate_layout(
    instance: InterleavedInstance, slots: int = DEFAULT_SLOTS, tokenizer: Tokenizer = whitespace_tokens
) -> LayoutReport:
    """One block per segment, in segment order, tiling ``[0, total_length)``."""
    if slots < 1:
        raise ValueError("slots must be positive")
    blocks = []
    pos = 0
    for seg in instance.segments:
        if seg.kind == "text":
            n = tokenizer(seg.text)
            blocks.append(Block("text", pos, n))
        else:
            n = slots
            blocks.append(Block("visual", pos, n, seg.proxy_index))
        pos += n
    return LayoutReport(tuple(blocks), pos, slots)


def check_alignment(report: LayoutReport, instance: InterleavedInstance) -> list[str]:
    """Violations of the interleaving contract; empty when the layout is sound.

    Block ``i`` of the report describes segment ``i`` of the instance. Each
    image's visual block must start exactly where the text declaring it ends:
    earlier means the images were hoisted ahead of their text.
    """
    violations = []
    blocks = report.blocks
    pos = 0
    for b in sorted(blocks, key=lambda b: (b.start, b.end)):
        if b.start != pos or b.length < 0:
            violations.append(f"tiling: block at {b.start} should start at {pos}")
            break
        pos = b.end
    else:
        if pos != report.total_length:
            violations.append(f"tiling: blocks end at {pos}, total_length is {report.total_length}")

    visual = [b for b in blocks if b.kind == "visual"]
    k = instance.n_images
    if len(visual) != k:
        violations.append(f"image count: {len(visual)} visual blocks for {k} images")
    for b in visual:
        if b.length != report.visual_slots_per_image:
            violations.append(f"slot width: visual block at {b.start} has {b.length} slots")

    by_position = sorted(visual, key=lambda b: b.start)
    if [b.proxy for b in by_position] != list(range(len(visual))):
        violations.append(f"proxy order: visual blocks carry proxies {[b.proxy for b in by_position]}")

    segments = instance.segments
    if len(blocks) != len(segments):
        violations.append(f"position mismatch: {len(blocks)} blocks for {len(segments)} segments")
        return violations
    front_loaded = []
    for i, (b, seg) in enumerate(zip(blocks, segments)):
        if (b.kind == "visual") != (seg.kind == "image"):
            violations.append(f"position mismatch: block {i} is {b.kind} but segment {i} is {seg.kind}")
            continue
        if b.kind != "visual":
            continue
        prev_seg = segments[i - 1] if i else None
        if prev_seg is None or prev_seg.kind != "text" or proxy_token(seg.proxy_index) not in prev_seg.text:
            violations.append(f"declaration order: visual block {b.proxy} is not preceded by its declaration")
            continue
        declared_end = blocks[i - 1].end
        if b.start < declared_end:
            front_loaded.append(b.proxy)
        elif b.start != declared_end:
            violations.append(f"position mismatch: visual block {b.proxy} at {b.start}, declared at {declared_end}")
    if front_loaded:
        violations.append(f"front-loaded images: visual blocks {front_loaded} precede the text that declares them")
    return violations
