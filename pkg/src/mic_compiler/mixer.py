"""Square-root dataset mixing and sample budgeting."""

from __future__ import annotations

import bisect
import hashlib
import math
import random
from dataclasses import dataclass
from typing import Iterable, Iterator, Literal, Mapping, Sequence

from .errors import EmptyPlan, ZeroCount

Sampling = Literal["stratified", "iid"]


def derive_seed(*key: object) -> int:
    """Stable 64-bit seed from an arbitrary key; independent of PYTHONHASHSEED."""
    digest = hashlib.blake2b("\x1f".join(map(str, key)).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def substream(*key: object) -> random.Random:
    return random.Random(derive_seed(*key))


def compute_weights(counts: Sequence[int]) -> list[float]:
    """Probability of drawing from each dataset, proportional to sqrt(size)."""
    if not counts:
        raise EmptyPlan("no datasets to mix")
    for c in counts:
        if c < 1:
            raise ZeroCount(f"dataset size must be >= 1, got {c}")
    roots = [math.sqrt(c) for c in counts]
    total = math.fsum(roots)
    return [r / total for r in roots]


def budget_from_fraction(total: int, fraction: float) -> int:
    """``round(total * fraction)`` with halves rounded up, at least 1."""
    if total < 1 or not 0 < fraction <= 1:
        raise ValueError("need total >= 1 and 0 < fraction <= 1")
    return max(1, math.floor(total * fraction + 0.5))


@dataclass(frozen=True)
class DatasetPlan:
    name: str
    count: int
    no_exemplars: bool = False
    n_shots: int = 4


@dataclass(frozen=True)
class MixPlan:
    datasets: tuple[DatasetPlan, ...]
    probabilities: tuple[float, ...]
    budget: int
    seed: int
    sampling: Sampling = "stratified"

    @classmethod
    def build(
        cls, datasets: Sequence[DatasetPlan], budget: int, seed: int, sampling: Sampling = "stratified"
    ) -> "MixPlan":
        probs = compute_weights([d.count for d in datasets])
        return cls(tuple(datasets), tuple(probs), budget, seed, sampling)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.datasets]

    def expected_counts(self) -> list[int]:
        return [math.floor(p * self.budget + 0.5) for p in self.probabilities]

    def problems(self) -> list[str]:
        errs = []
        if not self.datasets:
            return ["plan has no datasets"]
        if len(set(self.names)) != len(self.names):
            errs.append("dataset names must be unique")
        if len(self.probabilities) != len(self.datasets):
            errs.append("one probability per dataset required")
        if any(d.count < 1 for d in self.datasets):
            errs.append("every dataset count must be >= 1")
        elif len(self.probabilities) == len(self.datasets):
            for p, ref in zip(self.probabilities, compute_weights([d.count for d in self.datasets])):
                if abs(p - ref) > 1e-12 * ref:
                    errs.append(f"probability {p} deviates from sqrt weighting {ref}")
            if abs(math.fsum(self.probabilities) - 1.0) > 1e-9:
                errs.append("probabilities must sum to 1")
        if self.budget < 1:
            errs.append("budget must be positive")
        if self.sampling not in ("stratified", "iid"):
            errs.append(f"unknown sampling {self.sampling!r}")
        return errs


def _cdf(probabilities: Sequence[float]) -> list[float]:
    total = math.fsum(probabilities)
    cdf = []
    acc = []
    for p in probabilities:
        acc.append(p)
        cdf.append(math.fsum(acc) / total)
    cdf[-1] = 1.0
    return cdf


def draw_labels(plan: MixPlan, rng: random.Random) -> list[int]:
    """Dataset index of every draw, by inverse CDF over the cumulative weights.

    ``iid`` uses one independent uniform per draw. ``stratified`` uses one
    uniform per stratum ``[i/B, (i+1)/B)`` and then shuffles the draw order,
    so every draw is still marginally categorical(p) while each per-dataset
    total stays strictly within two of ``p_d * B`` (only the strata cut by
    the dataset's CDF interval ends are uncertain).
    """
    cdf = _cdf(plan.probabilities)
    budget = plan.budget
    if plan.sampling == "iid":
        return [bisect.bisect_right(cdf, rng.random()) for _ in range(budget)]
    labels = [bisect.bisect_right(cdf, (i + rng.random()) / budget) for i in range(budget)]
    rng.shuffle(labels)
    return labels


class _Cycle:
    """Endless per-dataset stream, reshuffled on every pass."""

    def __init__(self, records: Sequence, seed: int, name: str):
        if not records:
            raise ZeroCount(f"dataset {name!r} has no records")
        self.records = records
        self.seed = seed
        self.name = name
        self.cycle = -1
        self.order: list[int] = []
        self.pos = 0

    def next(self):
        if self.pos >= len(self.order):
            self.cycle += 1
            self.order = list(range(len(self.records)))
            substream(self.seed, self.name, self.cycle).shuffle(self.order)
            self.pos = 0
        record = self.records[self.order[self.pos]]
        self.pos += 1
        return record


def sample_stream(
    plan: MixPlan, datasets: Mapping[str, Iterable], rng: random.Random | None = None
) -> Iterator[tuple[str, object]]:
    """Yield exactly ``plan.budget`` ``(dataset name, record)`` draws.

    Deterministic for a given plan seed (or ``rng`` state).
    """
    if rng is None:
        rng = substream(plan.seed, "mix")
    streams = []
    for d in plan.datasets:
        records = datasets[d.name]
        if not isinstance(records, Sequence):
            records = list(records)
        streams.append(_Cycle(records, plan.seed, d.name))
    for label in draw_labels(plan, rng):
        yield plan.datasets[label].name, streams[label].next()
