"""Exception hierarchy.

Every error raised by the package derives from :class:`SpotwiseError` and,
where it describes bad input, also from :class:`ValueError` so callers that
only know the builtin still catch it.
"""

from __future__ import annotations


class SpotwiseError(Exception):
    """Base class for all package errors."""


class ParseError(SpotwiseError, ValueError):
    """Malformed text input. ``row`` and ``column`` are 1-based when known."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class RangeError(SpotwiseError, ValueError):
    """A numeric value lies outside its permitted range."""


class ConfigError(SpotwiseError, ValueError):
    """Inconsistent or invalid configuration."""


class FormatError(SpotwiseError, ValueError):
    """Undecodable binary input, e.g. a raster that is not PNG/PGM."""


class DegenerateMaskError(FormatError):
    """ROI mask with no inside pixel or no outside pixel."""


class DomainError(SpotwiseError, ValueError):
    """Argument outside the domain of an operation."""


class InsufficientDataError(SpotwiseError, ValueError):
    """Too few samples for a statistic."""


class ClockSkewError(SpotwiseError, ValueError):
    """``now`` precedes the timestamp it is compared to."""


class IngestRejected(SpotwiseError):
    """An ingestion request was refused.

    ``reason`` is one of ``unknown-device``, ``unauthorized``,
    ``bad-payload`` or ``range``.
    """

    REASONS = ("unknown-device", "unauthorized", "bad-payload", "range")

    def __init__(self, reason: str, detail: str = ""):
        if reason not in self.REASONS:
            raise ValueError(f"unknown rejection reason {reason!r}")
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason}: {detail}" if detail else reason)
