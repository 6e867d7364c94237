"""Content hashes and execution identities.

An execution identity binds together everything a node's result can depend
on: its structural spec, its resolved context inputs, and the identities of
its predecessors. Two executions share an identity exactly when nothing
observable to the node differs, which is what makes replay a proof of
equivalence rather than a similarity heuristic.

Canonical encoding (the on-disk compatibility contract, see docs/FORMATS.md):
every hashed structure is rendered as compact JSON with lexicographically
sorted object keys, separators ``(",", ":")``, non-ASCII preserved, encoded
as UTF-8. Lists keep their declared order only where order is semantic
(a node's input ports); everything map-like is sorted.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Iterable, Mapping

from dagline.errors import DuplicatePortError

if TYPE_CHECKING:
    from dagline.graph import ContextBinding, NodeSpec

DIGEST_SIZE = 32
ALGORITHM = "sha-256"


def canonical_json_bytes(value: Any) -> bytes:
    """Encode a JSON-compatible value canonically (sorted keys, compact, UTF-8)."""
    return json.dumps(
        value, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


@dataclass(frozen=True, slots=True)
class ContentHash:
    """A SHA-256 digest rendered lowercase-hex wherever it leaves the process."""

    digest: bytes
    algorithm: str = ALGORITHM

    def __post_init__(self) -> None:
        if len(self.digest) != DIGEST_SIZE:
            raise ValueError(
                f"digest must be exactly {DIGEST_SIZE} bytes, got {len(self.digest)}"
            )
        if self.algorithm != ALGORITHM:
            raise ValueError(f"unsupported hash algorithm: {self.algorithm!r}")

    @property
    def hex(self) -> str:
        return self.digest.hex()

    @classmethod
    def from_hex(cls, text: str) -> ContentHash:
        return cls(bytes.fromhex(text))

    def __str__(self) -> str:
        return self.hex


def hash_content(content: bytes) -> ContentHash:
    """Hash raw bytes. The empty input yields the standard SHA-256 empty digest."""
    return ContentHash(hashlib.sha256(content).digest())


def canonical_bytes(spec: NodeSpec) -> bytes:
    """Canonical byte encoding of a node's structural spec.

    Config keys are sorted; the input-port list keeps its declared order
    because port order is part of the structure. Field-wise equal specs
    produce identical bytes regardless of how they were constructed.
    """
    doc = {
        "config": _plain(spec.config),
        "executor": spec.executor_kind,
        "id": spec.node_id,
        "inputs": [[p.name, p.artifact_type, p.source] for p in spec.input_ports],
        "output_type": spec.output_type,
    }
    return canonical_json_bytes(doc)


def hash_spec(spec: NodeSpec) -> ContentHash:
    return hash_content(canonical_bytes(spec))


def compute_input_hash(context: Iterable[ContextBinding]) -> ContentHash:
    """Hash a node's resolved context surface.

    Bindings are reduced to ``(port, content-type, content-hash)`` triples and
    sorted by port name, so the result is independent of supply order. Hashing
    per-binding content hashes (not concatenated raw bytes) keeps boundaries
    unambiguous.
    """
    triples: list[list[str]] = []
    seen: set[str] = set()
    for binding in context:
        if binding.port in seen:
            raise DuplicatePortError(f"duplicate context port {binding.port!r}")
        seen.add(binding.port)
        triples.append(
            [binding.port, binding.content_type, hash_content(binding.content).hex]
        )
    triples.sort(key=lambda t: t[0])
    return hash_content(canonical_json_bytes(triples))


@dataclass(frozen=True, slots=True)
class ExecutionIdentity:
    """The identity of one node execution; self-verifying against its parts.

    ``value`` is the hash of (spec hash, input hash, predecessor contribution
    per port). Predecessors enter as a port-name map rather than a bare set:
    the same upstream results wired to different ports are different inputs.
    """

    value: ContentHash
    spec_hash: ContentHash
    input_hash: ContentHash
    predecessors: Mapping[str, ContentHash] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "predecessors", dict(self.predecessors))
        expected = _identity_value(self.spec_hash, self.input_hash, self.predecessors)
        if expected.digest != self.value.digest:
            raise ValueError(
                "execution identity does not verify: "
                f"stored {self.value.hex[:12]}, recomputed {expected.hex[:12]}"
            )

    def verify(self) -> bool:
        recomputed = _identity_value(self.spec_hash, self.input_hash, self.predecessors)
        return recomputed.digest == self.value.digest

    def __str__(self) -> str:
        return self.value.hex


def _identity_value(
    spec_hash: ContentHash,
    input_hash: ContentHash,
    predecessors: Mapping[str, ContentHash],
) -> ContentHash:
    doc = {
        "inputs": input_hash.hex,
        "preds": {port: h.hex for port, h in predecessors.items()},
        "spec": spec_hash.hex,
    }
    return hash_content(canonical_json_bytes(doc))


def compute_execution_identity(
    spec_hash: ContentHash,
    input_hash: ContentHash,
    predecessors: Mapping[str, ContentHash] | None = None,
) -> ExecutionIdentity:
    """Combine the three identity components into a verified ExecutionIdentity."""
    preds = dict(predecessors or {})
    value = _identity_value(spec_hash, input_hash, preds)
    return ExecutionIdentity(
        value=value, spec_hash=spec_hash, input_hash=input_hash, predecessors=preds
    )


def _plain(value: Any) -> Any:
    """Reject config values that would not round-trip through canonical JSON."""
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    raise TypeError(f"config values must be JSON-compatible, got {type(value).__name__}")
