"""Exception hierarchy shared by every spectrafuse module."""

from __future__ import annotations


class SpectraFuseError(Exception):
    """Base class for all errors raised by spectrafuse."""


class FormatError(SpectraFuseError, ValueError):
    """A file or text record violates its documented format.

    ``line`` (1-based) or ``offset`` (0-based byte offset) locate the problem
    when known.
    """

    def __init__(self, message: str, *, path=None, line: int | None = None,
                 offset: int | None = None):
        self.path = None if path is None else str(path)
        self.line = line
        self.offset = offset
        where = []
        if self.path is not None:
            where.append(self.path)
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.reason = message


class DegenerateConfigurationError(SpectraFuseError, ValueError):
    """Correspondences do not determine a unique homography."""


class PointAtInfinityError(SpectraFuseError, ValueError):
    """A point maps to the line at infinity under a homography."""


class FusionError(SpectraFuseError):
    """A frame pair could not be fused."""


class DetectorError(SpectraFuseError):
    """An external detector failed or produced no usable output."""

    def __init__(self, message: str, *, returncode: int | None = None,
                 stderr: str = ""):
        super().__init__(message)
        self.returncode = returncode
        self.stderr = stderr


class DetectorTimeoutError(DetectorError):
    """An external detector exceeded its time budget."""


class EvaluationDomainError(SpectraFuseError, ValueError):
    """A metric is undefined for the given counts (e.g. DR with no ground truth)."""


class ReportError(SpectraFuseError, ValueError):
    """A report was requested for an incomplete set of rows."""
