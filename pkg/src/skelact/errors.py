"""Exception taxonomy shared across the toolkit.

The CLI maps these onto exit codes: usage errors exit 1, data/parse errors
exit 2, configuration mismatches exit 3.
"""


class UsageError(ValueError):
    """An API or CLI call that cannot be satisfied as requested."""


class DimensionError(ValueError):
    """Tensor extents do not admit the requested operation."""


class ParseError(ValueError):
    """A data file violates its format; carries the offending line when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyBodyError(ParseError):
    """A skeleton file contains no tracked body in any frame."""


class TopologyError(ValueError):
    """A bone list does not form a spanning tree over the joints."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed, truncated, or of the wrong version."""


class ConfigMismatchError(ValueError):
    """A checkpoint and a dataset disagree on joints, classes, or frames."""
