"""End-to-end corpus build: ingest, mix, render, assemble, write.

Every instance is a pure function of (seed, dataset, record id, draw
ordinal), so output bytes do not depend on the worker count.
"""

from __future__ import annotations

import json
import logging
import multiprocessing
import os
import random
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from .core import InterleavedInstance, Segment, SourceRecord, TemplateBank, serialize
from .declaration import DeclarationStyle, declare_images, declare_segments
from .errors import ManifestError, MissingField, PlacementError, TemplateArity, ZeroCount
from .icl import Exemplar, assemble_instance, choose_template_index, fill_template, sample_exemplars
from .ingest import DatasetDescriptor, IngestReport, read_dataset, route
from .interconnect import entity_question, expand_video, replace_mentions
from .manifest import PipelineManifest
from .mixer import DatasetPlan, MixPlan, budget_from_fraction, derive_seed, sample_stream

log = logging.getLogger(__name__)

FALLBACK = "fallback"
_IDS_ENCODER = json.JSONEncoder(ensure_ascii=False)


@dataclass
class Prepared:
    """A record made ready for template filling."""

    record: SourceRecord
    route: str
    images: tuple
    question_segments: Optional[list[Segment]] = None
    warnings: list[str] = field(default_factory=list)

    def signature(self) -> tuple:
        q_images = sum(1 for s in self.question_segments or () if s.kind == "image")
        has_question = self.question_segments is not None or bool(self.record.question)
        extras = frozenset(k for k, v in (self.record.extras or {}).items() if v)
        return (len(self.images), q_images, has_question, bool(self.record.options), extras)


@dataclass
class DatasetContext:
    descriptor: DatasetDescriptor
    records: list[SourceRecord]
    bank: TemplateBank
    ids: list[str] = field(init=False)
    positions: dict[str, int] = field(init=False)
    _eligible: dict[tuple, list[int]] = field(init=False, default_factory=dict)
    _prepared: dict[int, tuple] = field(init=False, default_factory=dict)

    def __post_init__(self) -> None:
        self.ids = [r.id for r in self.records]
        self.positions = {rid: i for i, rid in enumerate(self.ids)}

    @property
    def shots(self) -> int:
        return 0 if self.descriptor.skips_exemplars else self.descriptor.n_shots


class Renderer:
    """Turns one mixer draw into one serialized instance."""

    def __init__(
        self,
        contexts: dict[str, DatasetContext],
        *,
        seed: int,
        style: DeclarationStyle = DeclarationStyle.IS_FORM,
        placement: str = "prefix",
        frames: int = 8,
        include_parent: bool = True,
    ):
        self.contexts = contexts
        self.seed = seed
        self.style = style
        self.placement = placement
        self.frames = frames
        self.include_parent = include_parent
        # Reseeding one generator gives the same stream as a fresh
        # random.Random(seed) at half the cost.
        self._rng = random.Random()

    def prepare(self, ctx: DatasetContext, record: SourceRecord) -> Prepared:
        path = route(record, ctx.descriptor)
        if path == "video":
            record = expand_video(record, self.frames)
            return Prepared(record, path, record.images)
        if path == "entity":
            eq = entity_question(record)
            warnings = [f"unused_entities: {', '.join(eq.unused)}"] if eq.unused else []
            record = replace(
                record,
                answer=replace_mentions(record.answer, eq.proxies),
                options=tuple(replace_mentions(o, eq.proxies) for o in record.options) if record.options else None,
            )
            images = record.images[:1] if self.include_parent else ()
            return Prepared(record, path, images, declare_segments(eq.segments, self.style), warnings)
        return Prepared(record, path, record.images)

    def _fill(self, template: str, prep: Prepared) -> InterleavedInstance:
        return fill_template(
            template, prep.record, self.style, question_segments=prep.question_segments, images=prep.images
        )

    def eligible(self, ctx: DatasetContext, prep: Prepared) -> list[int]:
        # Whether a template fits depends only on the record's signature.
        sig = prep.signature()
        cached = ctx._eligible.get(sig)
        if cached is None:
            cached = []
            for i, template in enumerate(ctx.bank.templates):
                try:
                    self._fill(template, prep)
                except (TemplateArity, MissingField):
                    continue
                cached.append(i)
            ctx._eligible[sig] = cached
        return cached

    def fallback(self, prep: Prepared, warnings: list[str]) -> InterleavedInstance:
        if prep.question_segments is not None:
            template = "{prompt}.\n{question}" if prep.images else "{question}"
            return self._fill(template, prep)
        try:
            return declare_images(prep.record, self.style, self.placement)
        except PlacementError:
            warnings.append("placement_fallback: no {image} slots for inline placement")
            return declare_images(prep.record, self.style, "prefix")

    def prepared(self, ctx: DatasetContext, pos: int) -> tuple[Prepared, list[int]]:
        # Preparation is deterministic per record, so it is done once.
        hit = ctx._prepared.get(pos)
        if hit is None:
            prep = self.prepare(ctx, ctx.records[pos])
            hit = ctx._prepared[pos] = (prep, self.eligible(ctx, prep))
        return hit

    def render_part(self, ctx, pos, rng, warnings, template_index=None) -> tuple[InterleavedInstance, str, str]:
        prep, eligible = self.prepared(ctx, pos)
        warnings.extend(prep.warnings)
        if template_index is not None and template_index in eligible:
            index = template_index
        elif eligible:
            index = choose_template_index(ctx.bank, rng, eligible)
        else:
            return self.fallback(prep, warnings), FALLBACK, prep.route
        return self._fill(ctx.bank.templates[index], prep), f"{ctx.bank.task}#{index}", prep.route

    def render(self, ordinal: int, name: str, pos: int) -> tuple[bytes, str, list[str], int]:
        """Return the serialized line, template key, warnings and number of parts rendered."""
        ctx = self.contexts[name]
        record = ctx.records[pos]
        rng = self._rng
        rng.seed(derive_seed(self.seed, name, record.id, ordinal))
        warnings: list[str] = []
        query, key, path = self.render_part(ctx, pos, rng, warnings)
        template_index = int(key.rsplit("#", 1)[1]) if key != FALLBACK else None

        ex_ids = sample_exemplars(ctx.ids, record.id, ctx.shots, rng, query_pos=pos, warnings=warnings)
        exemplars = []
        for ex_id in ex_ids:
            part, _, _ = self.render_part(ctx, ctx.positions[ex_id], rng, [], template_index)
            exemplars.append(Exemplar.from_instance(part))

        meta = {"source_id": record.id, "template": key, "route": path, "draw": str(ordinal)}
        if ex_ids:
            meta["exemplar_ids"] = _IDS_ENCODER.encode(ex_ids)
        if warnings:
            meta["warnings"] = "; ".join(warnings)
        instance = assemble_instance(exemplars, query, meta=meta, instance_id=f"{name}/{record.id}/{ordinal}")
        return serialize(instance, check=False), key, warnings, 1 + len(exemplars)


# Set in the parent before forking so workers inherit it without pickling.
_WORKER_RENDERER: Optional[Renderer] = None


def _render_in_worker(draw: tuple[int, str, int]):
    return _WORKER_RENDERER.render(*draw)


def render_all(renderer: Renderer, draws: Sequence[tuple[int, str, int]], workers: int = 1):
    """Render draws in order; with ``workers > 1`` a forked pool keeps map order."""
    if workers <= 1 or len(draws) < 2:
        for draw in draws:
            yield renderer.render(*draw)
        return
    global _WORKER_RENDERER
    _WORKER_RENDERER = renderer
    try:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(workers) as pool:
            chunk = max(1, min(512, len(draws) // (workers * 4) or 1))
            yield from pool.imap(_render_in_worker, draws, chunksize=chunk)
    finally:
        _WORKER_RENDERER = None


@dataclass
class BuildResult:
    output: Path
    report_path: Path
    report: dict


def report_path_for(output: Path) -> Path:
    return output.with_name(output.stem + ".report.json")


def load_contexts(manifest: PipelineManifest) -> tuple[dict[str, DatasetContext], dict[str, IngestReport]]:
    banks = manifest.banks()
    contexts, reports = {}, {}
    for d in manifest.datasets:
        records, report = read_dataset(d)
        if not records:
            raise ManifestError(f"dataset {d.name!r} has no valid records ({report.rejected} rejected)")
        contexts[d.name] = DatasetContext(d, records, banks[d.task])
        reports[d.name] = report
    return contexts, reports


def plan_for(manifest: PipelineManifest, counts: dict[str, int]) -> MixPlan:
    total = sum(counts.values())
    budget = manifest.mix.budget
    if budget is None:
        budget = budget_from_fraction(total, manifest.mix.fraction)
    datasets = [
        DatasetPlan(d.name, counts[d.name], d.skips_exemplars, 0 if d.skips_exemplars else d.n_shots)
        for d in manifest.datasets
    ]
    try:
        return MixPlan.build(datasets, budget, manifest.mix.seed, manifest.mix.sampling)
    except ZeroCount as exc:
        raise ManifestError(str(exc)) from None


def build(manifest: PipelineManifest, *, figures_dir: Path | None = None) -> BuildResult:
    """Build the corpus described by ``manifest``.

    Writes the JSONL corpus atomically (no partial file survives a failure)
    and a JSON report next to it. OSError propagates for I/O failures,
    ManifestError for unusable configuration or data.
    """
    started = time.perf_counter()
    contexts, ingest_reports = load_contexts(manifest)
    plan = plan_for(manifest, {name: len(c.records) for name, c in contexts.items()})
    renderer = Renderer(
        contexts,
        seed=manifest.mix.seed,
        style=manifest.style,
        placement=manifest.placement,
        frames=manifest.frames,
        include_parent=manifest.include_parent,
    )
    draws = [
        (ordinal, name, contexts[name].positions[record.id])
        for ordinal, (name, record) in enumerate(
            sample_stream(plan, {name: c.records for name, c in contexts.items()})
        )
    ]

    output = Path(manifest.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    tmp = output.with_name(output.name + ".partial")
    templates: Counter[str] = Counter()
    warning_counts: Counter[str] = Counter()
    drawn: Counter[str] = Counter()
    parts = 0
    try:
        with open(tmp, "wb") as handle:
            for (_, name, _), (line, key, warnings, n_parts) in zip(
                draws, render_all(renderer, draws, manifest.workers)
            ):
                handle.write(line)
                parts += n_parts
                drawn[name] += 1
                templates[key] += 1
                for w in warnings:
                    warning_counts[w.split(":", 1)[0]] += 1
        os.replace(tmp, output)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    elapsed = time.perf_counter() - started

    expected = plan.expected_counts()
    report = {
        "output": str(output),
        "instances": len(draws),
        "budget": plan.budget,
        "seed": plan.seed,
        "sampling": plan.sampling,
        "datasets": [
            {
                "name": d.name,
                "count": d.count,
                "p": p,
                "expected": e,
                "drawn": drawn[d.name],
                "n_shots": d.n_shots,
                "no_exemplars": d.no_exemplars,
                "ingest": ingest_reports[d.name].to_dict(),
            }
            for d, p, e in zip(plan.datasets, plan.probabilities, expected)
        ],
        "template_usage": dict(sorted(templates.items())),
        "warnings": dict(sorted(warning_counts.items())),
        "timing": {
            "seconds": round(elapsed, 6),
            "records_per_second": round(len(draws) / elapsed, 1) if elapsed > 0 else None,
            "parts_per_second": round(parts / elapsed, 1) if elapsed > 0 else None,
            "workers": manifest.workers,
        },
    }
    rpath = report_path_for(output)
    rpath.write_text(json.dumps(report, indent=2, sort_keys=False) + "\n", encoding="utf-8")
    if figures_dir is not None:
        from . import plotting

        plotting.mix_figure(plan, dict(drawn), Path(figures_dir) / "mixture.png")
        plotting.template_usage_figure(dict(templates), Path(figures_dir) / "template_usage.png")
    log.info("wrote %d instances to %s in %.2fs", len(draws), output, elapsed)
    return BuildResult(output, rpath, report)
