"""Declarative pipeline manifest (YAML).

Example::

    output: build/mic.jsonl
    slots: 32
    frames: 8
    include_parent: true
    workers: 1
    templates: my_templates.json      # optional; default bank otherwise
    declaration:
      style: is_form                  # or colon_form
      placement: prefix               # or inline
    mix:
      seed: 7
      budget: 1000                    # or fraction: 0.1 of all accepted records
      sampling: stratified            # or iid
    datasets:
      - name: vqa
        adapter: vqa                  # generic | vqa | video | entity_boxes
        path: data/vqa.jsonl
        task: vqav2                   # template bank key
        n_shots: 4
        no_exemplars: false           # default: true for video and entity_boxes

Relative paths resolve against the manifest's directory. Command-line flags
override the manifest (``--seed``, ``--out``, ``--budget``, ``--shots``,
``--workers``).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Optional

import yaml

from .core import TemplateBank
from .declaration import DeclarationStyle
from .errors import ManifestError, MicError
from .ingest import ADAPTERS, DatasetDescriptor
from .layout import DEFAULT_SLOTS
from .templates import default_banks, load_banks


@dataclass(frozen=True)
class MixConfig:
    seed: int
    budget: Optional[int] = None
    fraction: Optional[float] = None
    sampling: str = "stratified"


@dataclass(frozen=True)
class PipelineManifest:
    datasets: tuple[DatasetDescriptor, ...]
    mix: MixConfig
    output: Path
    style: DeclarationStyle = DeclarationStyle.IS_FORM
    placement: str = "prefix"
    slots: int = DEFAULT_SLOTS
    frames: int = 8
    include_parent: bool = True
    templates: Optional[Path] = None
    workers: int = 1

    def banks(self) -> dict[str, TemplateBank]:
        if self.templates is None:
            return default_banks()
        return load_banks(self.templates)

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        out: str | Path | None = None,
        budget: int | None = None,
        shots: int | None = None,
        workers: int | None = None,
    ) -> "PipelineManifest":
        m = self
        if seed is not None:
            m = replace(m, mix=replace(m.mix, seed=seed))
        if budget is not None:
            if budget < 1:
                raise ManifestError("--budget must be positive")
            m = replace(m, mix=replace(m.mix, budget=budget, fraction=None))
        if out is not None:
            m = replace(m, output=Path(out))
        if shots is not None:
            if shots < 0:
                raise ManifestError("--shots must be nonnegative")
            m = replace(m, datasets=tuple(replace(d, n_shots=shots) for d in m.datasets))
        if workers is not None:
            if workers < 1:
                raise ManifestError("--workers must be positive")
            m = replace(m, workers=workers)
        return m


def _int(value: Any, where: str, minimum: int = 0) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ManifestError(f"{where} must be an integer >= {minimum}")
    return value


def _bool(value: Any, where: str) -> bool:
    if not isinstance(value, bool):
        raise ManifestError(f"{where} must be true or false")
    return value


def parse_manifest(data: Any, base: Path = Path(".")) -> PipelineManifest:
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a mapping")

    raw_sets = data.get("datasets")
    if not isinstance(raw_sets, list) or not raw_sets:
        raise ManifestError("manifest needs at least one dataset")
    datasets = []
    for i, d in enumerate(raw_sets):
        where = f"datasets[{i}]"
        if not isinstance(d, dict):
            raise ManifestError(f"{where} must be a mapping")
        for key in ("name", "adapter", "path", "task"):
            if not isinstance(d.get(key), str) or not d[key]:
                raise ManifestError(f"{where}.{key} is required")
        if d["adapter"] not in ADAPTERS:
            raise ManifestError(f"{where}.adapter must be one of {', '.join(ADAPTERS)}")
        no_ex = d.get("no_exemplars")
        datasets.append(
            DatasetDescriptor(
                name=d["name"],
                adapter=d["adapter"],
                path=str(base / d["path"]),
                task=d["task"],
                no_exemplars=None if no_ex is None else _bool(no_ex, f"{where}.no_exemplars"),
                n_shots=_int(d.get("n_shots", 4), f"{where}.n_shots"),
            )
        )
    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        raise ManifestError("dataset names must be unique")

    mix = data.get("mix")
    if not isinstance(mix, dict) or "seed" not in mix:
        raise ManifestError("mix.seed is required")
    seed = _int(mix["seed"], "mix.seed")
    budget = mix.get("budget")
    fraction = mix.get("fraction")
    if (budget is None) == (fraction is None):
        raise ManifestError("mix needs exactly one of budget or fraction")
    if budget is not None:
        budget = _int(budget, "mix.budget", 1)
    if fraction is not None:
        if not isinstance(fraction, (int, float)) or isinstance(fraction, bool) or not 0 < fraction <= 1:
            raise ManifestError("mix.fraction must be in (0, 1]")
        fraction = float(fraction)
    sampling = mix.get("sampling", "stratified")
    if sampling not in ("stratified", "iid"):
        raise ManifestError("mix.sampling must be stratified or iid")

    decl = data.get("declaration") or {}
    if not isinstance(decl, dict):
        raise ManifestError("declaration must be a mapping")
    try:
        style = DeclarationStyle(decl.get("style", "is_form"))
    except ValueError:
        raise ManifestError("declaration.style must be is_form or colon_form") from None
    placement = decl.get("placement", "prefix")
    if placement not in ("prefix", "inline"):
        raise ManifestError("declaration.placement must be prefix or inline")

    output = data.get("output")
    if not isinstance(output, str) or not output:
        raise ManifestError("output path is required")
    templates = data.get("templates")
    if templates is not None and not isinstance(templates, str):
        raise ManifestError("templates must be a path")

    manifest = PipelineManifest(
        datasets=tuple(datasets),
        mix=MixConfig(seed, budget, fraction, sampling),
        output=base / output,
        style=style,
        placement=placement,
        slots=_int(data.get("slots", DEFAULT_SLOTS), "slots", 1),
        frames=_int(data.get("frames", 8), "frames", 1),
        include_parent=_bool(data.get("include_parent", True), "include_parent"),
        templates=base / templates if templates else None,
        workers=_int(data.get("workers", 1), "workers", 1),
    )
    try:
        banks = manifest.banks()
    except OSError as exc:
        raise ManifestError(f"cannot read template file: {exc}") from None
    except MicError as exc:
        raise ManifestError(f"bad template file: {exc}") from None
    for d in manifest.datasets:
        if d.task not in banks:
            raise ManifestError(f"dataset {d.name!r}: no template bank for task {d.task!r}")
    return manifest


def load_manifest(path: str | Path) -> PipelineManifest:
    """Read and check a manifest. OSError propagates; content problems raise ManifestError."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ManifestError(f"invalid YAML: {exc}") from None
    return parse_manifest(data, path.parent)
