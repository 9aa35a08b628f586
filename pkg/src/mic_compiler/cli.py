"""Command line entry point: ``build``, ``validate``, ``stats``, ``layout-check``.

Exit codes: 0 success, 1 invariant violations found, 2 manifest error,
3 I/O error. Flags override the corresponding manifest fields.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path
from typing import Iterator, Sequence

from .core import deserialize
from .errors import InvariantViolation, ManifestError, ParseError
from .layout import DEFAULT_SLOTS, check_alignment, simulate_layout
from .manifest import load_manifest
from .pipeline import build, load_contexts, plan_for

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_MANIFEST = 2
EXIT_IO = 3

log = logging.getLogger("mic_compiler")


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def _corpus_lines(path: Path) -> Iterator[tuple[int, bytes]]:
    with open(path, "rb") as handle:
        for line_no, raw in enumerate(handle, start=1):
            yield line_no, raw


def _check_line(raw: bytes):
    """Return (instance, None) or (None, message) for one corpus line."""
    try:
        return deserialize(raw), None
    except ParseError as exc:
        return None, f"parse error: {exc}"
    except InvariantViolation as exc:
        return None, "; ".join(exc.violations)


def cmd_build(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest).with_overrides(
        seed=args.seed, out=args.out, budget=args.budget, shots=args.shots, workers=args.workers
    )
    result = build(manifest, figures_dir=args.figures)
    report = result.report
    for d in report["datasets"]:
        _err(f"{d['name']}: p={d['p']:.6f} expected={d['expected']} drawn={d['drawn']} rejected={d['ingest']['rejected']}")
    _err(
        f"wrote {report['instances']} instances to {result.output} "
        f"({report['timing']['records_per_second']} records/s); report {result.report_path}"
    )
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    violations = []
    count = 0
    for line_no, raw in _corpus_lines(args.corpus):
        count += 1
        _, problem = _check_line(raw)
        if problem is not None:
            violations.append({"line": line_no, "violation": problem})
            print(f"{line_no}\t{problem}")
    summary = {"corpus": str(args.corpus), "lines": count, "violations": len(violations), "details": violations}
    if args.report:
        Path(args.report).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    _err(f"{count} lines, {len(violations)} violations")
    return EXIT_VIOLATIONS if violations else EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest).with_overrides(seed=args.seed, budget=args.budget)
    contexts, _ = load_contexts(manifest)
    plan = plan_for(manifest, {name: len(c.records) for name, c in contexts.items()})
    print("dataset\tN_d\tp_d\texpected")
    for d, p, e in zip(plan.datasets, plan.probabilities, plan.expected_counts()):
        print(f"{d.name}\t{d.count}\t{p:.6f}\t{e}")
    _err(f"budget {plan.budget}, seed {plan.seed}, sampling {plan.sampling}")
    if args.figures:
        from . import plotting

        plotting.mix_figure(plan, None, Path(args.figures) / "mix_plan.png")
    return EXIT_OK


def cmd_layout_check(args: argparse.Namespace) -> int:
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    kinds: Counter[str] = Counter()
    lengths = []
    bad = 0
    count = 0
    try:
        for line_no, raw in _corpus_lines(args.corpus):
            count += 1
            instance, problem = _check_line(raw)
            if instance is None:
                entry = {"line": line_no, "violations": [problem]}
                kinds["invalid instance"] += 1
            else:
                report = simulate_layout(instance, args.slots)
                found = check_alignment(report, instance)
                lengths.append(report.total_length)
                entry = {"line": line_no, "id": instance.id, **report.to_dict(), "violations": found}
                for v in found:
                    kinds[v.split(":", 1)[0]] += 1
            if entry["violations"]:
                bad += 1
            out.write(json.dumps(entry, ensure_ascii=False) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    summary = {"instances": count, "with_violations": bad, "violation_counts": dict(sorted(kinds.items()))}
    _err(json.dumps(summary))
    if args.figures and lengths:
        from . import plotting

        plotting.layout_length_figure(lengths, Path(args.figures) / "layout_lengths.png", args.slots)
    return EXIT_VIOLATIONS if bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mic-compiler", description="Compile vision-language datasets into interleaved in-context corpora."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a corpus from a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--seed", type=int, help="override mix.seed")
    p.add_argument("--out", type=Path, help="override the output path")
    p.add_argument("--budget", type=int, help="override the budget (replaces mix.fraction)")
    p.add_argument("--shots", type=int, help="override n_shots for every dataset")
    p.add_argument("--workers", type=int, help="render with this many processes")
    p.add_argument("--figures", type=Path, help="also write PNG figures to this directory")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("validate", help="check every line of a corpus")
    p.add_argument("corpus", type=Path)
    p.add_argument("--report", type=Path, help="write the JSON violation report here")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="print the mix plan of a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--figures", type=Path)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("layout-check", help="simulate the token layout of every instance")
    p.add_argument("corpus", type=Path)
    p.add_argument("--slots", type=int, default=DEFAULT_SLOTS)
    p.add_argument("--out", type=Path, help="write per-instance JSON lines here instead of stdout")
    p.add_argument("--figures", type=Path)
    p.set_defaults(func=cmd_layout_check)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "slots", 1) < 1:
        _err("error: --slots must be positive")
        return EXIT_MANIFEST
    try:
        return args.func(args)
    except ManifestError as exc:
        _err(f"manifest error: {exc}")
        return EXIT_MANIFEST
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
