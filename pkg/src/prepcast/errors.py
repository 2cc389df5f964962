"""Exception hierarchy shared by every prepcast module."""

from __future__ import annotations


class PrepcastError(Exception):
    """Base class; the CLI maps these to exit code 2."""


class ParseError(PrepcastError):
    pass


class ValidationError(PrepcastError):
    pass


class CycleError(ValidationError):
    pass


class DanglingEdgeError(ValidationError):
    pass


class DepthError(ValidationError):
    pass


class UnknownNodeError(PrepcastError):
    pass


class UncoveredTaskError(PrepcastError):
    pass


class ExplosionError(PrepcastError):
    pass


class UnresolvedAlternativesError(PrepcastError):
    pass


class MissingFieldError(PrepcastError):
    pass


class NoSuchProcessError(PrepcastError):
    pass


class SpawnError(PrepcastError):
    pass


class CorruptRecordError(PrepcastError):
    def __init__(self, path, line_no: int, reason: str) -> None:
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no


class ConfigError(PrepcastError):
    pass


class EmptyDatasetError(PrepcastError):
    pass


class InsufficientDataError(PrepcastError):
    pass


class NoModelError(PrepcastError):
    pass


class VersionError(PrepcastError):
    pass


class CorruptModelError(PrepcastError):
    pass
