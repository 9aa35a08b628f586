from __future__ import annotations

import random
from dataclasses import replace

import pytest

import fuzz
from mic_compiler.core import ImageAssetSpec, InterleavedInstance, Segment
from mic_compiler.layout import Block, LayoutReport, check_alignment, simulate_layout, whitespace_tokens
from oracles import hand_tiling

IMG = ImageAssetSpec.file("x.jpg")


def vqa():
    return InterleavedInstance(
        "a", "d", (Segment.of_text("image 0 is [IMG0] "), Segment.image(0, IMG), Segment.of_text("Q? Answer:")), "t", n_images=1
    )


def test_single_image_example():
    report = simulate_layout(vqa(), 32)
    assert report.total_length == 38
    assert report.blocks == (Block("text", 0, 4), Block("visual", 4, 32, 0), Block("text", 36, 2))
    assert check_alignment(report, vqa()) == []


def test_no_images():
    inst = InterleavedInstance("a", "d", (Segment.of_text("just some words"),), "t")
    report = simulate_layout(inst)
    assert report.blocks == (Block("text", 0, 3),) and report.total_length == 3


def test_three_images_have_96_visual_tokens():
    segs = []
    for j in range(3):
        segs += [Segment.of_text(f"image {j} is [IMG{j}] "), Segment.image(j, IMG)]
    report = simulate_layout(InterleavedInstance("a", "d", tuple(segs), "t", n_images=3))
    assert report.visual_tokens == 96


def test_slots_must_be_positive():
    with pytest.raises(ValueError):
        simulate_layout(vqa(), 0)


def test_front_loaded_negative():
    inst = vqa()
    report = simulate_layout(inst)
    moved = tuple(replace(b, start=0) if b.kind == "visual" else b for b in report.blocks)
    found = check_alignment(replace(report, blocks=moved), inst)
    assert any(v.startswith("front-loaded images") for v in found)


def test_proxy_order_negative():
    rng = random.Random(1)
    segs = fuzz.segments(rng, 2)
    inst = InterleavedInstance("a", "d", tuple(segs), "t", n_images=2)
    report = simulate_layout(inst)
    visual = [b for b in report.blocks if b.kind == "visual"]
    swapped = {visual[0].start: 1, visual[1].start: 0}
    blocks = tuple(replace(b, proxy=swapped[b.start]) if b.kind == "visual" else b for b in report.blocks)
    found = check_alignment(replace(report, blocks=blocks), inst)
    assert any(v.startswith("proxy order") for v in found)


def test_gap_is_a_tiling_violation():
    report = simulate_layout(vqa())
    blocks = list(report.blocks)
    blocks[2] = replace(blocks[2], start=blocks[2].start + 1)
    assert any(v.startswith("tiling") for v in check_alignment(replace(report, blocks=tuple(blocks)), vqa()))


def test_wrong_slot_width():
    report = simulate_layout(vqa())
    assert any(v.startswith("slot width") for v in check_alignment(replace(report, visual_slots_per_image=16), vqa()))


def test_fuzzed_layout_law_and_pluggable_tokenizer():
    rng = random.Random(21)
    for _ in range(500):
        inst = fuzz.instance(rng)
        for tok in (whitespace_tokens, len):
            report = simulate_layout(inst, 32, tok)
            texts = sum(tok(s.text) for s in inst.segments if s.kind == "text")
            assert report.total_length == texts + 32 * inst.n_images
            assert [(b.kind, b.start, b.length, b.proxy) for b in report.blocks] == hand_tiling(inst, 32, tok)
            assert check_alignment(report, inst) == []


def test_report_to_dict():
    d = simulate_layout(vqa()).to_dict()
    assert d["total_length"] == 38 and d["visual_tokens"] == 32 and d["blocks"][1] == {"kind": "visual", "start": 4, "length": 32, "proxy": 0}
    assert isinstance(simulate_layout(vqa()), LayoutReport)
