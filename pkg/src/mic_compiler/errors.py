"""Exception types raised by the compiler."""

from __future__ import annotations


class MicError(Exception):
    """Base class for every error raised by this package."""


class InvariantViolation(MicError, ValueError):
    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "invariant violation")


class ParseError(MicError, ValueError):
    """Malformed record. ``offset`` is a byte offset into the line, when known."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        where = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"{message}{where}")


class PlacementError(MicError, ValueError):
    pass


class DoubleDeclaration(MicError, ValueError):
    pass


class RectOutOfBounds(MicError, ValueError):
    pass


class MissingField(MicError, KeyError):
    def __init__(self, field: str):
        self.field = field
        super().__init__(field)

    def __str__(self) -> str:
        return f"record has no value for placeholder {{{self.field}}}"


class TemplateArity(MicError, ValueError):
    pass


class TemplateError(MicError, ValueError):
    """Template is not well formed."""


class EmptyBank(MicError, ValueError):
    pass


class EmptyPlan(MicError, ValueError):
    pass


class ZeroCount(MicError, ValueError):
    pass


class ManifestError(MicError, ValueError):
    pass
