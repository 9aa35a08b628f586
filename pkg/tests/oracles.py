"""Reference implementations written independently of the package code.

They favour obviousness over speed: character scanning instead of regular
expressions, arbitrary precision instead of floats, explicit loops instead
of shared helpers.
"""

from __future__ import annotations

import mpmath

from mic_compiler.core import InterleavedInstance, Segment


def _is_word_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def _read_digits(s: str, i: int) -> tuple[str, int]:
    j = i
    while j < len(s) and "0" <= s[j] <= "9":
        j += 1
    return s[i:j], j


def rewrite_references(s: str, offset: int, k_local: int) -> str:
    """Add ``offset`` to every ``[IMGm]`` and to every standalone ``image m`` with m < k_local."""
    out = []
    i = 0
    while i < len(s):
        if s.startswith("[IMG", i):
            digits, j = _read_digits(s, i + 4)
            if digits and j < len(s) and s[j] == "]":
                out.append(f"[IMG{int(digits) + offset}]")
                i = j + 1
                continue
        if s.startswith("image ", i) and (i == 0 or not _is_word_char(s[i - 1])):
            digits, j = _read_digits(s, i + 6)
            if digits and (j == len(s) or not _is_word_char(s[j])):
                m = int(digits)
                out.append(f"image {m + offset if m < k_local else digits}")
                i = j
                continue
        out.append(s[i])
        i += 1
    return "".join(out)


def renumber_oracle(
    parts: list[tuple[list[Segment], str]], query: InterleavedInstance, instance_id: str, meta: dict
) -> InterleavedInstance:
    """Brute-force global renumbering of exemplar parts followed by the query."""
    out: list[Segment] = []
    base = 0
    for segs, answer in parts:
        k = len([s for s in segs if s.kind == "image"])
        for s in segs:
            if s.kind == "image":
                out.append(Segment("image", proxy_index=s.proxy_index + base, asset=s.asset))
            else:
                out.append(Segment("text", text=rewrite_references(s.text, base, k)))
        out.append(Segment("text", text=" " + rewrite_references(answer, base, k) + "\n"))
        base += k
    k = len([s for s in query.segments if s.kind == "image"])
    for s in query.segments:
        if s.kind == "image":
            out.append(Segment("image", proxy_index=s.proxy_index + base, asset=s.asset))
        else:
            out.append(Segment("text", text=rewrite_references(s.text, base, k)))
    return InterleavedInstance(
        id=instance_id,
        dataset=query.dataset,
        segments=tuple(out),
        target=rewrite_references(query.target, base, k),
        n_exemplars=len(parts),
        n_images=base + k,
        meta=meta,
    )


def sqrt_weights_reference(counts: list[int], dps: int = 50) -> list[mpmath.mpf]:
    with mpmath.workdps(dps):
        roots = [mpmath.sqrt(mpmath.mpf(c)) for c in counts]
        total = mpmath.fsum(roots)
        return [r / total for r in roots]


def split_on_names(text: str, names: list[str]) -> list[tuple[str, str]]:
    """Tokenise ``text`` into ("text", s) and ("entity", name) pieces.

    A name matches only when not glued to word characters on either side;
    the longest name wins at a given position.
    """
    ordered = sorted(names, key=len, reverse=True)
    pieces: list[tuple[str, str]] = []
    buf = []
    i = 0
    while i < len(text):
        hit = None
        if i == 0 or not _is_word_char(text[i - 1]):
            for name in ordered:
                end = i + len(name)
                if text.startswith(name, i) and (end == len(text) or not _is_word_char(text[end])):
                    hit = name
                    break
        if hit:
            if buf:
                pieces.append(("text", "".join(buf)))
                buf = []
            pieces.append(("entity", hit))
            i += len(hit)
        else:
            buf.append(text[i])
            i += 1
    if buf:
        pieces.append(("text", "".join(buf)))
    return pieces


def hand_tiling(instance: InterleavedInstance, slots: int, count) -> list[tuple[str, int, int, int | None]]:
    """(kind, start, length, proxy) blocks laid end to end in segment order."""
    blocks = []
    pos = 0
    for s in instance.segments:
        n = count(s.text) if s.kind == "text" else slots
        blocks.append((s.kind.replace("image", "visual"), pos, n, s.proxy_index))
        pos += n
    return blocks
