"""Exception hierarchy shared across the package.

Every error raised by dagline derives from DaglineError so callers (and the
CLI) can catch domain failures without swallowing programming errors.
"""

from __future__ import annotations


class DaglineError(Exception):
    """Base class for all dagline domain errors."""


class CycleError(DaglineError):
    """The dependency relation contains a cycle."""


class UnknownNodeError(DaglineError, KeyError):
    """A node id was referenced that does not exist in the graph."""


class ManifestError(DaglineError):
    """A workflow manifest could not be parsed into a graph at all.

    Structural violations of a parseable manifest are reported as validation
    data, not raised; this error is for undecodable or malformed documents.
    """


class DuplicatePortError(DaglineError):
    """Two context bindings or predecessor entries share a port name."""


class StorageError(DaglineError):
    """An artifact or ledger write failed at the I/O level."""


class ArtifactNotFoundError(DaglineError, KeyError):
    """No artifact is stored under the requested content hash."""


class IntegrityError(DaglineError):
    """Stored bytes do not rehash to their content address."""


class IdentityConflictError(DaglineError):
    """Two different execution records were submitted for one identity.

    This signals a determinism violation: the same execution identity must
    always produce the same canonical output.
    """


class DuplicateExecutorError(DaglineError):
    """An executor kind was registered twice."""


class UnknownExecutorError(DaglineError, KeyError):
    """A node references an executor kind that is not registered."""


class ContractViolationError(DaglineError):
    """An executor produced an output whose type breaks the node contract."""


class ExecutorFailureError(DaglineError):
    """A node-local procedure raised; carries the failing node id."""

    def __init__(self, node_id: str, cause: BaseException) -> None:
        super().__init__(f"executor failed at node {node_id!r}: {cause}")
        self.node_id = node_id
        self.cause = cause


class MissingDependencyError(DaglineError):
    """A dependency port's producer has no published artifact."""


class MissingContextError(DaglineError):
    """A context port has no binding in the workspace."""


class UnknownTargetError(DaglineError):
    """An edit event targets a node or port that does not exist."""


class UndeclaredInputError(DaglineError):
    """Resolved state offers a port the node spec never declared."""
