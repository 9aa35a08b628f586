from __future__ import annotations

import itertools
import random
from collections import Counter

import pytest

import fuzz
from mic_compiler.core import ImageAssetSpec, InterleavedInstance, Segment, SourceRecord, TemplateBank, validate
from mic_compiler.declaration import DeclarationStyle
from mic_compiler.errors import EmptyBank, InvariantViolation, MissingField, TemplateArity
from mic_compiler.icl import (
    Exemplar,
    assemble_instance,
    choose_template,
    fill_template,
    sample_exemplars,
    shift_text,
)
from oracles import renumber_oracle, rewrite_references

CAR = ImageAssetSpec.file("car.jpg")


def rec(**kw):
    base = dict(id="r", dataset="d", images=(CAR,), question="What color is the car?", answer="red")
    base.update(kw)
    return SourceRecord(**base)


def test_fill_vqa_template():
    inst = fill_template("image 0 is [IMG0] {image}. Question: {question} Answer:", rec())
    assert inst.segments == (
        Segment.of_text("image 0 is [IMG0] "),
        Segment.image(0, CAR),
        Segment.of_text(". Question: What color is the car? Answer:"),
    )
    assert inst.target == "red"


def test_fill_options():
    inst = fill_template("Q: {question} Options: {options}", rec(images=(), options=("A", "B")))
    assert inst.text == "Q: What color is the car? Options: A; B"


def test_fill_missing_question():
    with pytest.raises(MissingField) as info:
        fill_template("image 0 is [IMG0] {image} {question}", rec(question=None))
    assert info.value.field == "question"


def test_fill_arity_mismatch():
    with pytest.raises(TemplateArity):
        fill_template("image 0 is [IMG0] {image} image 1 is [IMG1] {image}", rec())
    with pytest.raises(TemplateArity):
        fill_template("Question: {question}", rec())


def test_fill_prompt_declares_all_images():
    r = rec(images=(CAR, CAR))
    inst = fill_template("{prompt}. Q: {question}", r, DeclarationStyle.COLON_FORM)
    assert inst.text == "image 0: [IMG0] .\nimage 1: [IMG1] . Q: What color is the car?"
    assert validate(inst) == []


def test_fill_answer_placeholder_is_not_rendered():
    inst = fill_template("Q: {question} A: {answer}", rec(images=()))
    assert "red" not in inst.text and inst.target == "red"


def test_fill_interleaved_question_is_shifted_after_prompt():
    qsegs = [Segment.of_text("why is image 0 is [IMG0] "), Segment.image(0, CAR), Segment.of_text(" sad?")]
    r = rec(images=(CAR,), options=("[IMG0] cries", "no"), answer="[IMG0] cries")
    inst = fill_template("{prompt}. {question} Options: {options}", r, question_segments=qsegs)
    assert [s.proxy_index for s in inst.segments if s.kind == "image"] == [0, 1]
    assert "why is image 1 is [IMG1] " in inst.text and "Options: [IMG1] cries; no" in inst.text
    assert inst.target == "[IMG1] cries"
    assert validate(inst) == []


def test_choose_template_singleton_and_empty():
    bank = TemplateBank("t", ("only {question}",))
    rng = random.Random(0)
    assert all(choose_template(bank, rng) == "only {question}" for _ in range(20))
    with pytest.raises(EmptyBank):
        choose_template(TemplateBank("t", ()), rng)


def test_choose_template_reproducible_and_uniform():
    bank = TemplateBank("t", tuple(f"t{i} {{question}}" for i in range(10)))
    seq = [choose_template(bank, random.Random(42)) for _ in range(3)]
    assert len(set(seq)) == 1
    rng = random.Random(1)
    counts = Counter(choose_template(bank, rng) for _ in range(100_000))
    assert sum(abs(c / 100_000 - 0.1) for c in counts.values()) < 0.02


def test_sample_exemplars():
    rng = random.Random(0)
    ids = [f"x{i}" for i in range(100)]
    assert sample_exemplars(ids, "x3", 0, rng) == []
    for _ in range(10_000):
        got = sample_exemplars(ids, "x3", 4, rng)
        assert len(set(got)) == 4 and "x3" not in got
    warnings = []
    assert sorted(sample_exemplars(["a", "b", "c"], "b", 4, rng, warnings=warnings)) == ["a", "c"]
    assert warnings and warnings[0].startswith("exemplars_clamped")


def test_sample_exemplars_is_uniform_over_others():
    rng = random.Random(9)
    ids = list("abcde")
    counts = Counter(x for _ in range(20_000) for x in sample_exemplars(ids, "c", 2, rng))
    assert "c" not in counts
    assert all(abs(v / 40_000 - 0.25) < 0.02 for v in counts.values())


def part(k: int, tag: str, rng: random.Random) -> tuple[list[Segment], str]:
    return fuzz.segments(rng, k) or [Segment.of_text("prompt?")], fuzz.target(rng, k) + f" {tag}"


def as_query(segs, answer, dataset="d"):
    k = sum(1 for s in segs if s.kind == "image")
    return InterleavedInstance("q", dataset, tuple(segs), answer, n_images=k)


def test_assemble_examples():
    rng = random.Random(0)
    ex = [Exemplar(*part(1, f"e{i}", rng)) for i in range(2)]
    q = as_query(*part(1, "q", rng))
    out = assemble_instance(ex, q)
    assert out.n_images == 3 and out.n_exemplars == 2
    assert [s.proxy_index for s in out.segments if s.kind == "image"] == [0, 1, 2]
    assert out.target.endswith(" q")
    assert " e0\n" in out.text and " e1\n" in out.text and " q" not in out.text

    assert assemble_instance([], q) == q

    ex2 = Exemplar(*part(2, "e", rng))
    out = assemble_instance([ex2], q)
    assert [s.proxy_index for s in out.segments if s.kind == "image"] == [0, 1, 2]


def test_assemble_rejects_broken_part():
    bad = Exemplar((Segment.image(0, CAR),), "x")
    with pytest.raises(InvariantViolation) as info:
        assemble_instance([bad], as_query([Segment.of_text("q")], "a"))
    assert any(v.startswith("exemplar 0") for v in info.value.violations)


def test_shift_text_matches_oracle():
    rng = random.Random(2)
    for _ in range(3000):
        s = "".join(rng.choice(["[IMG", "]", "image ", "1", "2", "10", "x", " ", "[IMG3]", "image 1", "animage 2"]) for _ in range(12))
        off, k = rng.randint(0, 7), rng.randint(0, 4)
        assert shift_text(s, off, k) == rewrite_references(s, off, k)


def test_renumber_grid_small():
    rng = random.Random(4)
    for n_ex in range(3):
        for ks in itertools.product(range(3), repeat=n_ex + 1):
            parts = [part(k, f"e{i}", rng) for i, k in enumerate(ks[:-1])]
            q = as_query(*part(ks[-1], "q", rng))
            got = assemble_instance([Exemplar(tuple(s), a) for s, a in parts], q, meta={"m": "1"}, instance_id="id")
            assert got == renumber_oracle(parts, q, "id", {"m": "1"})


def test_query_answer_never_in_segments():
    rng = random.Random(8)
    for i in range(300):
        parts = [part(rng.randint(0, 2), f"EX{i}_{j}", rng) for j in range(rng.randint(0, 4))]
        q = as_query(*part(rng.randint(0, 2), f"QANS{i}", rng))
        out = assemble_instance([Exemplar(tuple(s), a) for s, a in parts], q)
        assert f"QANS{i}" not in out.text
        assert all(f"EX{i}_{j}" in out.text for j in range(len(parts)))
