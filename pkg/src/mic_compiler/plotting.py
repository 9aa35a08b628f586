"""Figures for build, stats and layout-check reports (written as PNG files)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .mixer import MixPlan  # noqa: E402


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def mix_figure(plan: MixPlan, drawn: Mapping[str, int] | None, path: Path) -> Path:
    """Expected draws per dataset, next to the actual draws when known."""
    names = plan.names
    expected = plan.expected_counts()
    x = range(len(names))
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(names) + 2), 3.5))
    width = 0.4 if drawn is not None else 0.8
    ax.bar([i - width / 2 if drawn is not None else i for i in x], expected, width, label="expected")
    if drawn is not None:
        ax.bar([i + width / 2 for i in x], [drawn.get(n, 0) for n in names], width, label="drawn")
    ax.set_xticks(list(x), names, rotation=30, ha="right")
    ax.set_ylabel("instances")
    ax.set_title(f"square-root mix, budget {plan.budget}")
    ax.legend()
    return _save(fig, path)


def template_usage_figure(usage: Mapping[str, int], path: Path) -> Path:
    keys = sorted(usage)
    fig, ax = plt.subplots(figsize=(max(4, 0.35 * len(keys) + 2), 3.5))
    ax.bar(range(len(keys)), [usage[k] for k in keys])
    ax.set_xticks(range(len(keys)), keys, rotation=90, fontsize=7)
    ax.set_ylabel("instances")
    ax.set_title("template usage")
    return _save(fig, path)


def layout_length_figure(lengths: Sequence[int], path: Path, slots: int) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(lengths, bins=min(50, max(1, len(set(lengths)))))
    ax.set_xlabel(f"simulated sequence length ({slots} slots per image)")
    ax.set_ylabel("instances")
    return _save(fig, path)
