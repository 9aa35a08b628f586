from __future__ import annotations

from pathlib import Path

import pytest
import yaml

from mic_compiler.declaration import DeclarationStyle
from mic_compiler.errors import ManifestError
from mic_compiler.manifest import load_manifest, parse_manifest


def base(**kw):
    data = {
        "output": "out.jsonl",
        "mix": {"seed": 3, "budget": 10},
        "datasets": [{"name": "a", "adapter": "vqa", "path": "a.jsonl", "task": "vqav2"}],
    }
    data.update(kw)
    return data


def test_defaults_and_relative_paths():
    m = parse_manifest(base(), Path("/data"))
    assert m.output == Path("/data/out.jsonl")
    assert m.datasets[0].path == "/data/a.jsonl" and m.datasets[0].n_shots == 4
    assert m.style is DeclarationStyle.IS_FORM and m.placement == "prefix"
    assert (m.slots, m.frames, m.workers, m.include_parent) == (32, 8, 1, True)
    assert m.mix.sampling == "stratified"


@pytest.mark.parametrize(
    "patch, fragment",
    [
        ({"datasets": []}, "at least one dataset"),
        ({"mix": {"budget": 5}}, "mix.seed"),
        ({"mix": {"seed": 1}}, "exactly one of budget or fraction"),
        ({"mix": {"seed": 1, "budget": 5, "fraction": 0.1}}, "exactly one of budget or fraction"),
        ({"mix": {"seed": 1, "budget": 0}}, "mix.budget"),
        ({"mix": {"seed": 1, "fraction": 1.5}}, "mix.fraction"),
        ({"mix": {"seed": 1, "budget": 5, "sampling": "weird"}}, "mix.sampling"),
        ({"datasets": [{"name": "a", "adapter": "nope", "path": "p", "task": "vqav2"}]}, "adapter"),
        ({"datasets": [{"name": "a", "adapter": "vqa", "path": "p", "task": "unknown"}]}, "no template bank"),
        ({"datasets": [{"name": "a", "adapter": "vqa", "path": "p"}]}, "task is required"),
        ({"datasets": [{"name": "a", "adapter": "vqa", "path": "p", "task": "vqav2"}] * 2}, "unique"),
        ({"declaration": {"style": "fancy"}}, "declaration.style"),
        ({"declaration": {"placement": "middle"}}, "placement"),
        ({"output": None}, "output"),
        ({"slots": 0}, "slots"),
        ({"include_parent": "yes"}, "include_parent"),
        ({"templates": "missing.json"}, "template file"),
    ],
)
def test_manifest_errors(patch, fragment):
    with pytest.raises(ManifestError) as info:
        parse_manifest(base(**patch), Path("/nonexistent"))
    assert fragment in str(info.value)


def test_not_a_mapping():
    with pytest.raises(ManifestError):
        parse_manifest([1, 2])


def test_overrides():
    m = parse_manifest(base(mix={"seed": 1, "fraction": 0.5}))
    o = m.with_overrides(seed=9, out="x.jsonl", budget=7, shots=0, workers=4)
    assert (o.mix.seed, o.mix.budget, o.mix.fraction) == (9, 7, None)
    assert o.output == Path("x.jsonl") and o.workers == 4 and o.datasets[0].n_shots == 0
    assert m.mix.seed == 1
    for bad in ({"budget": 0}, {"shots": -1}, {"workers": 0}):
        with pytest.raises(ManifestError):
            m.with_overrides(**bad)


def test_load_yaml(tmp_path):
    path = tmp_path / "m.yaml"
    path.write_text(yaml.safe_dump(base(declaration={"style": "colon_form", "placement": "inline"})))
    m = load_manifest(path)
    assert m.style is DeclarationStyle.COLON_FORM and m.placement == "inline"
    path.write_text("datasets: [unclosed")
    with pytest.raises(ManifestError):
        load_manifest(path)
    with pytest.raises(OSError):
        load_manifest(tmp_path / "absent.yaml")
