"""Instruction template banks.

A bank file is a JSON object mapping a task name to its list of templates.
The shipped default bank covers captioning, classification, VQA-style,
video and visual-reasoning tasks.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping

from .core import TemplateBank, validate_bank
from .errors import InvariantViolation, TemplateError


def banks_from_mapping(data: Mapping) -> dict[str, TemplateBank]:
    if not isinstance(data, Mapping):
        raise TemplateError("template file must map task names to template lists")
    banks = {}
    problems = []
    for task, templates in data.items():
        if not isinstance(templates, list) or not all(isinstance(t, str) for t in templates):
            problems.append(f"{task}: templates must be a list of strings")
            continue
        bank = TemplateBank(task, tuple(templates))
        problems.extend(validate_bank(bank))
        banks[task] = bank
    if problems:
        raise InvariantViolation(problems)
    return banks


def load_banks(path: str | Path) -> dict[str, TemplateBank]:
    with open(path, encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise TemplateError(f"{path}: {exc}") from None
    return banks_from_mapping(data)


@lru_cache(maxsize=None)
def _default() -> dict[str, TemplateBank]:
    text = resources.files("mic_compiler").joinpath("data/templates.json").read_text(encoding="utf-8")
    return banks_from_mapping(json.loads(text))


def default_banks() -> dict[str, TemplateBank]:
    return dict(_default())
