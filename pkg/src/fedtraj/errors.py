"""Exception taxonomy.

Errors are grouped by who can act on them: configuration errors mean the
operator wired incompatible parameters, protocol errors mean the two sides
of a connection disagree (and the connection is torn down), ingest errors
point at a bad input file, and internal errors are contract violations that
should never fire on valid data.
"""

from __future__ import annotations


class FedTrajError(Exception):
    """Base class for everything raised on purpose by this package."""


class ConfigurationError(FedTrajError):
    """Parameters outside the supported regime (e.g. grid side below tau)."""


class DomainError(FedTrajError, ValueError):
    """An argument outside an operation's mathematical domain."""


class IngestError(FedTrajError):
    """Malformed trajectory input; carries a line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class PublishFailure(FedTrajError):
    """Every perturbed query point left its cell; caller may retry with a fresh seed."""


class ProtocolError(FedTrajError):
    """Peer disagreement or malformed traffic; the connection is closed."""

    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


class TransportError(FedTrajError):
    """An owner could not be reached or a stream died mid-query."""


class PartialResultError(TransportError):
    """Some owners answered and some did not; no silent partial unions."""

    def __init__(self, failed: dict[str, Exception]):
        names = ", ".join(sorted(failed))
        super().__init__(f"owners failed: {names}")
        self.failed = failed


class IndexFormatError(FedTrajError):
    """Base for persisted-index load failures."""


class IndexVersionError(IndexFormatError):
    """Persisted index written by an unsupported format version."""


class IndexChecksumError(IndexFormatError):
    """Persisted index body does not match its trailing checksum."""


class IndexTruncatedError(IndexFormatError):
    """Persisted index ends before its declared content."""


class InternalError(FedTrajError):
    """A broken internal contract. Filing a bug is the only remedy."""
