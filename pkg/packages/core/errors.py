"""Exception hierarchy shared by the library and the runner."""

from __future__ import annotations

from typing import Any, Iterable, Optional


class StocTotError(RuntimeError):
    """Base class for every error raised by this project."""


class CorpusParseError(StocTotError):
    """Raised when a dataset file is not valid JSON / JSONL."""

    def __init__(self, path: str, message: str, *, byte_offset: Optional[int] = None, line: Optional[int] = None):
        self.path = path
        self.byte_offset = byte_offset
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if byte_offset is not None:
            where.append(f"byte offset {byte_offset}")
        location = ", ".join(where) or "unknown position"
        super().__init__(f"Malformed JSON in {path} at {location}: {message}")


class CorpusSchemaError(StocTotError):
    """Raised when a dataset record is missing a required key or has a bad value."""

    def __init__(self, path: str, record: int, key: str, detail: str = "missing required key"):
        self.path = path
        self.record = record
        self.key = key
        super().__init__(f"Schema error in {path}, record {record}, key '{key}': {detail}")


class SampleBoundsError(StocTotError, ValueError):
    """Raised when a sample size is outside (0, corpus size]."""


class TransportError(StocTotError):
    """Raised when an HTTP backend gives up after its retry budget."""

    def __init__(self, message: str, attempts: int, status_code: Optional[int] = None):
        self.attempts = attempts
        self.status_code = status_code
        super().__init__(f"{message} (after {attempts} attempt(s))")


class FixtureMissError(StocTotError):
    """Raised by the scripted backend when no entry matches a request."""

    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"No scripted reply for request digest {digest}")


class FixtureConflictError(StocTotError):
    """Raised when a digest is recorded twice with different reply text."""

    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"Fixture conflict: digest {digest} already recorded with a different reply")


class ConstraintExhaustedError(StocTotError):
    """Raised when the vocabulary mask leaves no token to generate at the first step."""


class TemplateBindingError(StocTotError, KeyError):
    """Raised when a template placeholder has no binding."""

    def __init__(self, template: str, placeholder: str):
        self.template = template
        self.placeholder = placeholder
        super().__init__(f"Template '{template}' has no binding for placeholder '{placeholder}'")

    def __str__(self) -> str:
        return self.args[0]


class PreconditionError(StocTotError):
    """Raised when a tree operation is called on a node in the wrong state."""


class EngineFailureError(StocTotError):
    """Raised when the reasoning engine cannot produce an answer for an example."""

    def __init__(self, message: str, tree: Any = None):
        self.tree = tree
        super().__init__(message)


class ConfigError(StocTotError):
    """Raised for invalid run configuration. ``fields`` names the offending keys."""

    def __init__(self, fields: Iterable[str], message: str):
        self.fields = tuple(fields)
        super().__init__(f"Invalid configuration ({', '.join(self.fields)}): {message}")


class RunDigestMismatchError(StocTotError):
    """Raised when a run directory's manifest does not match its stored config."""

    def __init__(self, expected: str, actual: str):
        self.expected = expected
        self.actual = actual
        super().__init__(f"Config digest mismatch: manifest has {expected}, config hashes to {actual}")


class RunMismatchError(StocTotError):
    """Raised when runs being compared cover different example ids."""

    def __init__(self, symmetric_difference: Iterable[str]):
        self.symmetric_difference = tuple(sorted(symmetric_difference))
        super().__init__(
            "Runs cover different examples; symmetric difference: "
            + ", ".join(self.symmetric_difference)
        )
