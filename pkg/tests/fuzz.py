"""Seeded generators of valid domain objects for property tests.

Plain ``random`` is used for the 10k-case loops (hypothesis is kept for the
smaller shrinking-friendly properties) so the fuzz sets stay fast and fixed.
"""

from __future__ import annotations

import random

from mic_compiler.core import CropRect, ImageAssetSpec, InterleavedInstance, Segment, SourceRecord, proxy_token

# Mix of ASCII, punctuation, whitespace and non-ASCII so encoding paths get exercised.
ALPHABET = "abcdefghij klmnop XYZ 0123 ,.?!:;'\"\\/{}\n\té漢字🙂"


def text(rng: random.Random, lo: int = 0, hi: int = 24) -> str:
    """Random text that never contains a proxy token."""
    s = "".join(rng.choice(ALPHABET) for _ in range(rng.randint(lo, hi)))
    return s.replace("[IMG", "(IMG")


def asset(rng: random.Random) -> ImageAssetSpec:
    kind = rng.choice(["file", "file_sized", "video_frame", "crop"])
    uri = f"img/{rng.randrange(10**6)}.jpg"
    if kind == "file":
        return ImageAssetSpec.file(uri)
    if kind == "file_sized":
        return ImageAssetSpec.file(uri, rng.randint(1, 640), rng.randint(1, 480))
    if kind == "video_frame":
        count = rng.randint(1, 900)
        return ImageAssetSpec.video_frame(f"vid/{rng.randrange(1000)}.mp4", rng.randrange(count), count)
    parent = ImageAssetSpec.file(uri, 200, 100)
    x0, y0 = rng.randrange(199), rng.randrange(99)
    rect = CropRect(x0, y0, rng.randint(x0 + 1, 200), rng.randint(y0 + 1, 100))
    return ImageAssetSpec.crop(parent, rect, label=f"obj{rng.randrange(9)}")


def segments(rng: random.Random, k: int, *, mentions: bool = True) -> list[Segment]:
    """A locally numbered, valid interleaved sequence with ``k`` images.

    Each image is preceded by a text segment ending in its declaration; later
    text may re-mention earlier proxies and say "image m" in prose.
    """
    out: list[Segment] = []
    for j in range(k):
        lead = text(rng, 0, 8)
        if mentions and j and rng.random() < 0.5:
            lead += f" see {proxy_token(rng.randrange(j))} and image {rng.randrange(j)} "
        phrase = rng.choice([f"image {j} is {proxy_token(j)} ", f"image {j}: {proxy_token(j)} ", f"{proxy_token(j)}"])
        out.append(Segment.of_text(lead + phrase))
        out.append(Segment.image(j, asset(rng)))
    tail = text(rng, 0, 16)
    if mentions and k and rng.random() < 0.5:
        tail += f" compare {proxy_token(rng.randrange(k))} with image {rng.randrange(k + 3)}"
    if tail:
        out.append(Segment.of_text(tail))
    return out


def target(rng: random.Random, k: int) -> str:
    t = text(rng, 0, 10)
    if k and rng.random() < 0.3:
        t += " " + proxy_token(rng.randrange(k))
    return t


def instance(rng: random.Random, max_images: int = 6) -> InterleavedInstance:
    k = rng.randint(0, max_images)
    segs = segments(rng, k)
    if not segs:
        segs = [Segment.of_text(text(rng, 1, 10) or "x")]
    meta = {text(rng, 1, 6): text(rng, 0, 8) for _ in range(rng.randint(0, 3))}
    meta.pop("format_version", None)
    return InterleavedInstance(
        id=f"i{rng.randrange(10**9)}" + text(rng, 0, 3),
        dataset=rng.choice(["vqa", "video", "vcr", "数据"]),
        segments=tuple(segs),
        target=target(rng, k),
        n_exemplars=rng.randint(0, 4),
        n_images=k,
        meta=meta,
    )


def record(rng: random.Random, n_images: int) -> SourceRecord:
    return SourceRecord(
        id=f"r{rng.randrange(10**9)}",
        dataset="fuzz",
        images=tuple(asset(rng) for _ in range(n_images)),
        question=text(rng, 0, 30),
        answer=text(rng, 0, 8),
    )
