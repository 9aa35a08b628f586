"""Unified in-context format: templates, exemplar sampling and assembly."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

from .core import (
    PROXY_RE,
    InterleavedInstance,
    Segment,
    SourceRecord,
    TemplateBank,
    join_options,
    parse_template,
    proxy_token,
    validate_instance,
)
from .declaration import DECLARATION_SEPARATOR, DeclarationStyle
from .errors import EmptyBank, InvariantViolation, MissingField, TemplateArity

EXEMPLAR_SEPARATOR = "\n"
DEFAULT_SHOTS = 4

# "[IMGm]" tokens and "image m" references both name image m.
_REFERENCE_RE = re.compile(r"\[IMG(\d+)\]|(?<!\w)image (\d+)(?!\w)")
_EXTRA_FIELDS = ("quadrant", "caption0", "caption1")


def _has_reference(text: str) -> bool:
    # str.find is much cheaper than a regex scan over long source texts.
    if "[IMG" in text:
        return True
    i = text.find("image ")
    while i != -1:
        if text[i + 6 : i + 7].isdigit():
            return True
        i = text.find("image ", i + 6)
    return False


def shift_text(text: str, offset: int, k_local: int) -> str:
    """Renumber image references in ``text`` by ``offset``.

    Every ``[IMGm]`` token moves; a plain ``image m`` phrase moves only when
    ``m < k_local`` so unrelated numbers in source text stay untouched.
    """
    if offset == 0 or not _has_reference(text):
        return text

    def sub(m: re.Match) -> str:
        if m.group(1) is not None:
            return proxy_token(int(m.group(1)) + offset)
        index = int(m.group(2))
        if index < k_local:
            return f"image {index + offset}"
        return m.group(0)

    return _REFERENCE_RE.sub(sub, text)


def shift_segments(segments: Sequence[Segment], offset: int, k_local: int) -> list[Segment]:
    if offset == 0:
        return list(segments)
    out = []
    for seg in segments:
        if seg.kind == "image":
            out.append(Segment.image(seg.proxy_index + offset, seg.asset))
        else:
            out.append(Segment.of_text(shift_text(seg.text, offset, k_local)))
    return out


@dataclass(frozen=True)
class _Compiled:
    parts: tuple[tuple[str, str | None], ...]
    names: tuple[str, ...]
    literal_tokens: frozenset[int]
    n_slots: int
    # Images emitted before {question}: fixed {image} slots, plus the
    # prompt's declarations when {prompt} comes first.
    slots_before_question: int
    prompt_before_question: bool


@lru_cache(maxsize=4096)
def _compiled(template: str) -> _Compiled:
    parts = tuple(parse_template(template))
    names = tuple(name for _, name in parts if name is not None)
    literal_tokens = frozenset(int(m) for lit, _ in parts for m in PROXY_RE.findall(lit))
    before = names[: names.index("question")] if "question" in names else names
    return _Compiled(parts, names, literal_tokens, names.count("image"), before.count("image"), "prompt" in before)


def template_fields(template: str) -> list[str]:
    """Placeholder names of ``template`` in order of appearance."""
    return list(_compiled(template).names)


def fill_template(
    template: str,
    record: SourceRecord,
    style: DeclarationStyle = DeclarationStyle.IS_FORM,
    *,
    question_segments: Sequence[Segment] | None = None,
    images: Sequence | None = None,
) -> InterleavedInstance:
    """Merge ``record`` into ``template`` and return a query-only instance.

    Each ``{image}`` becomes the next image slot (the template text before it
    carries the declaration). ``{prompt}`` expands to a declaration block for
    the record's images when the template has no ``{image}``. The answer is
    never rendered; it becomes the target.

    ``question_segments`` replaces the plain question with an already
    interleaved one (entity crops, locally numbered from 0). Its proxies and
    any ``[IMGj]`` mentions in options and answer are shifted to follow the
    images emitted before ``{question}``.
    """
    c = _compiled(template)
    names = c.names
    imgs = tuple(record.images if images is None else images)

    if c.n_slots:
        if c.n_slots != len(imgs):
            raise TemplateArity(f"template has {c.n_slots} {{image}} slots but record has {len(imgs)} images")
        prompt_imgs: tuple = ()
    else:
        if imgs and "prompt" not in names:
            raise TemplateArity(f"template declares no images but record has {len(imgs)}")
        prompt_imgs = imgs

    q_images = sum(1 for s in question_segments or () if s.kind == "image")
    if q_images and "question" not in names:
        raise TemplateArity("interleaved question needs a {question} placeholder")
    for name in names:
        if name == "question" and question_segments is None and not record.question:
            raise MissingField("question")
        if name == "options" and not record.options:
            raise MissingField("options")
        if name in _EXTRA_FIELDS and not (record.extras or {}).get(name):
            raise MissingField(name)

    q_offset = c.slots_before_question + (len(prompt_imgs) if c.prompt_before_question else 0)

    segments: list[Segment] = []
    buf: list[str] = []
    counter = 0

    def flush() -> None:
        if buf:
            text = "".join(buf)
            if text:
                segments.append(Segment.of_text(text))
            buf.clear()

    for literal, name in c.parts:
        buf.append(literal)
        if name == "image":
            flush()
            segments.append(Segment.image(counter, imgs[counter]))
            counter += 1
        elif name == "prompt":
            for i, asset in enumerate(prompt_imgs):
                if i:
                    buf.append(DECLARATION_SEPARATOR)
                buf.append(style.render(counter))
                flush()
                segments.append(Segment.image(counter, asset))
                counter += 1
        elif name == "question":
            if question_segments is None:
                buf.append(record.question)
            else:
                for seg in shift_segments(question_segments, q_offset, q_images):
                    if seg.kind == "text":
                        buf.append(seg.text)
                    else:
                        flush()
                        segments.append(seg)
                counter += q_images
        elif name == "options":
            buf.append(shift_text(join_options(record.options), q_offset, q_images))
        elif name in _EXTRA_FIELDS:
            buf.append(record.extras[name])
        # {answer} is dropped from the prompt: it is the target.
    flush()

    if c.literal_tokens and max(c.literal_tokens) >= counter:
        raise TemplateArity(f"template mentions {proxy_token(max(c.literal_tokens))} but declares {counter} images")
    return InterleavedInstance(
        id=record.id,
        dataset=record.dataset,
        segments=tuple(segments),
        target=shift_text(record.answer, q_offset, q_images),
        n_exemplars=0,
        n_images=counter,
    )


def choose_template_index(bank: TemplateBank, rng: random.Random, eligible: Sequence[int] | None = None) -> int:
    pool = range(len(bank.templates)) if eligible is None else eligible
    if not pool:
        raise EmptyBank(f"bank {bank.task!r} has no usable template")
    return pool[rng.randrange(len(pool))]


def choose_template(bank: TemplateBank, rng: random.Random) -> str:
    """Uniform draw from the bank."""
    return bank.templates[choose_template_index(bank, rng)]


def sample_exemplars(
    dataset_index: Sequence[str],
    query_id: str,
    n: int,
    rng: random.Random,
    *,
    query_pos: int | None = None,
    warnings: list[str] | None = None,
) -> list[str]:
    """Draw ``n`` distinct ids other than the query, without replacement.

    Clamps to every other id when the dataset is too small, appending a
    message to ``warnings`` when given. ``query_pos`` skips the index lookup.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    pos = dataset_index.index(query_id) if query_pos is None else query_pos
    others = len(dataset_index) - 1
    if n > others:
        if warnings is not None:
            warnings.append(f"exemplars_clamped: wanted {n}, have {others}")
        n = others
    if n == 0:
        return []
    picks = rng.sample(range(others), n)
    return [dataset_index[p + 1 if p >= pos else p] for p in picks]


@dataclass(frozen=True)
class Exemplar:
    segments: tuple[Segment, ...]
    answer: str

    @classmethod
    def from_instance(cls, instance: InterleavedInstance) -> "Exemplar":
        return cls(tuple(instance.segments), instance.target)

    @property
    def n_images(self) -> int:
        return sum(1 for s in self.segments if s.kind == "image")


def _local_problems(segments: Sequence[Segment], target: str, where: str) -> list[str]:
    probe = InterleavedInstance(
        id=where,
        dataset="",
        segments=tuple(segments),
        target=target,
        n_images=sum(1 for s in segments if s.kind == "image"),
    )
    return [f"{where}: {e}" for e in validate_instance(probe)]


def assemble_instance(
    exemplars: Sequence[Exemplar],
    query: InterleavedInstance,
    *,
    meta: Mapping[str, str] | None = None,
    instance_id: str | None = None,
) -> InterleavedInstance:
    """Concatenate exemplars (each followed by its answer) and the query.

    Proxies are renumbered to global document order; textual references in
    each part move with their images. Only the query answer is the target.
    """
    segments: list[Segment] = []
    offset = 0
    for ex in exemplars:
        k = ex.n_images
        segments.extend(shift_segments(ex.segments, offset, k))
        segments.append(Segment.of_text(" " + shift_text(ex.answer, offset, k) + EXEMPLAR_SEPARATOR))
        offset += k
    k = query.n_images
    segments.extend(shift_segments(query.segments, offset, k))
    out = InterleavedInstance(
        id=instance_id or query.id,
        dataset=query.dataset,
        segments=tuple(segments),
        target=shift_text(query.target, offset, k),
        n_exemplars=len(exemplars),
        n_images=offset + k,
        meta=dict(query.meta if meta is None else meta),
    )
    errs = validate_instance(out)
    if errs:
        # Blame the offending parts first; they are checked only on failure
        # since a valid whole implies nothing needs reporting.
        local = []
        for i, ex in enumerate(exemplars):
            local.extend(_local_problems(ex.segments, ex.answer, f"exemplar {i}"))
        local.extend(_local_problems(query.segments, query.target, "query"))
        raise InvariantViolation(local + errs)
    return out
