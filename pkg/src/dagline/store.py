"""Content-addressed artifact storage and the execution ledger.

Artifacts are stored under the SHA-256 of their bytes, so identical content
occupies one slot and re-publication is free. Executions are recorded in a
ledger keyed by execution identity; a second, *different* record under the
same identity is rejected as a determinism violation.

Two backends share the same semantics: ``FileStore`` persists to a directory
(``objects/``, ``executions/``, ``runs/``, ``nodes/``) and ``MemoryStore``
keeps everything in dicts for tests and experiments. Writes are serialized
by an internal lock; concurrent identical writes are idempotent.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

from dagline.errors import (
    ArtifactNotFoundError,
    IdentityConflictError,
    IntegrityError,
    StorageError,
)
from dagline.identity import (
    ContentHash,
    ExecutionIdentity,
    canonical_json_bytes,
    compute_execution_identity,
    hash_content,
)

DEPENDENCY_INPUT = "dependency"
CONTEXT_INPUT = "context"


@dataclass(frozen=True, slots=True)
class ExecutionStats:
    """Work done by one execution; character counts are the token analog."""

    input_chars: int = 0
    output_chars: int = 0
    synthesis_calls: int = 0
    elapsed: float = 0.0

    def __post_init__(self) -> None:
        if min(self.input_chars, self.output_chars, self.synthesis_calls) < 0:
            raise ValueError("stats counts must be non-negative")
        if self.elapsed < 0:
            raise ValueError("elapsed must be non-negative")

    def __add__(self, other: ExecutionStats) -> ExecutionStats:
        return ExecutionStats(
            input_chars=self.input_chars + other.input_chars,
            output_chars=self.output_chars + other.output_chars,
            synthesis_calls=self.synthesis_calls + other.synthesis_calls,
            elapsed=self.elapsed + other.elapsed,
        )


@dataclass(frozen=True, slots=True)
class ArtifactRecord:
    """A published artifact: bytes plus identity, type, and provenance."""

    artifact_id: ContentHash
    content: bytes
    content_type: str
    producer: str
    produced_under: ExecutionIdentity | None
    created_at: float = 0.0  # informational only; never hashed

    def __post_init__(self) -> None:
        if hash_content(self.content).digest != self.artifact_id.digest:
            raise IntegrityError(
                f"artifact id {self.artifact_id.hex[:12]} does not match content hash"
            )


@dataclass(frozen=True, slots=True)
class InputRef:
    """One entry of an execution's resolved input surface."""

    kind: str  # dependency | context
    hash: ContentHash


@dataclass(frozen=True, slots=True)
class ExecutionRecord:
    """The ledger entry for one node execution."""

    identity: ExecutionIdentity
    node_id: str
    canonical_artifact: ContentHash
    candidate_artifacts: tuple[ContentHash, ...] = ()
    input_surface: Mapping[str, InputRef] = field(default_factory=dict)
    stats: ExecutionStats = ExecutionStats()

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidate_artifacts", tuple(self.candidate_artifacts))
        object.__setattr__(self, "input_surface", dict(self.input_surface))


def record_to_doc(record: ExecutionRecord) -> dict:
    return {
        "canonical_artifact": record.canonical_artifact.hex,
        "candidate_artifacts": [c.hex for c in record.candidate_artifacts],
        "identity": {
            "inputs": record.identity.input_hash.hex,
            "preds": {p: h.hex for p, h in record.identity.predecessors.items()},
            "spec": record.identity.spec_hash.hex,
            "value": record.identity.value.hex,
        },
        "input_surface": {
            port: {"hash": ref.hash.hex, "kind": ref.kind}
            for port, ref in record.input_surface.items()
        },
        "node_id": record.node_id,
        "stats": {
            "elapsed": record.stats.elapsed,
            "input_chars": record.stats.input_chars,
            "output_chars": record.stats.output_chars,
            "synthesis_calls": record.stats.synthesis_calls,
        },
    }


def record_from_doc(doc: dict) -> ExecutionRecord:
    ident = doc["identity"]
    identity = compute_execution_identity(
        spec_hash=ContentHash.from_hex(ident["spec"]),
        input_hash=ContentHash.from_hex(ident["inputs"]),
        predecessors={p: ContentHash.from_hex(h) for p, h in ident["preds"].items()},
    )
    if identity.value.hex != ident["value"]:
        raise IntegrityError(
            f"ledger entry for {doc.get('node_id')!r} fails identity self-verification"
        )
    stats = doc["stats"]
    return ExecutionRecord(
        identity=identity,
        node_id=doc["node_id"],
        canonical_artifact=ContentHash.from_hex(doc["canonical_artifact"]),
        candidate_artifacts=tuple(
            ContentHash.from_hex(c) for c in doc["candidate_artifacts"]
        ),
        input_surface={
            port: InputRef(kind=ref["kind"], hash=ContentHash.from_hex(ref["hash"]))
            for port, ref in doc["input_surface"].items()
        },
        stats=ExecutionStats(
            input_chars=stats["input_chars"],
            output_chars=stats["output_chars"],
            synthesis_calls=stats["synthesis_calls"],
            elapsed=stats["elapsed"],
        ),
    )


def record_bytes(record: ExecutionRecord) -> bytes:
    """Canonical ledger-entry encoding; parse + re-serialize is bit-exact."""
    return canonical_json_bytes(record_to_doc(record)) + b"\n"


def _deterministic_fields(record: ExecutionRecord) -> bytes:
    """The portion of a record that determinism constrains (stats excluded:
    elapsed is a measurement and may vary between identical reruns)."""
    doc = record_to_doc(record)
    del doc["stats"]
    return canonical_json_bytes(doc)


class BaseStore:
    """Semantics shared by both backends; subclasses provide the primitives."""

    def __init__(self) -> None:
        self._lock = threading.Lock()

    # -- primitives supplied by subclasses ---------------------------------
    def _has_object(self, hex_id: str) -> bool:
        raise NotImplementedError

    def _write_object(self, hex_id: str, content: bytes, meta: dict) -> None:
        raise NotImplementedError

    def _read_object(self, hex_id: str) -> tuple[bytes, dict]:
        raise NotImplementedError

    def _object_ids(self) -> list[str]:
        raise NotImplementedError

    def _get_record(self, hex_identity: str) -> ExecutionRecord | None:
        raise NotImplementedError

    def _put_record(self, hex_identity: str, record: ExecutionRecord) -> None:
        raise NotImplementedError

    def _record_ids(self) -> list[str]:
        raise NotImplementedError

    def _node_history(self, node_id: str) -> list[str]:
        raise NotImplementedError

    def _append_node_history(self, node_id: str, hex_identity: str) -> None:
        raise NotImplementedError

    def _write_report(self, run_id: str, payload: bytes) -> None:
        raise NotImplementedError

    def _read_report(self, run_id: str) -> bytes:
        raise NotImplementedError

    def _run_ids(self) -> list[str]:
        raise NotImplementedError

    # -- public API ---------------------------------------------------------
    def put_artifact(
        self,
        content: bytes,
        content_type: str,
        producer: str,
        produced_under: ExecutionIdentity | None,
    ) -> ContentHash:
        """Persist bytes at their content hash; idempotent for identical content."""
        artifact_id = hash_content(content)
        with self._lock:
            if not self._has_object(artifact_id.hex):
                meta = {
                    "content_type": content_type,
                    "created_at": time.time(),
                    "producer": producer,
                    "produced_under": None
                    if produced_under is None
                    else {
                        "inputs": produced_under.input_hash.hex,
                        "preds": {
                            p: h.hex for p, h in produced_under.predecessors.items()
                        },
                        "spec": produced_under.spec_hash.hex,
                        "value": produced_under.value.hex,
                    },
                }
                self._write_object(artifact_id.hex, content, meta)
        return artifact_id

    def get_artifact(self, artifact_id: ContentHash) -> ArtifactRecord:
        """Fetch an artifact, rehashing its bytes as an integrity check."""
        hex_id = artifact_id.hex
        if not self._has_object(hex_id):
            raise ArtifactNotFoundError(f"no artifact {hex_id}")
        content, meta = self._read_object(hex_id)
        if hash_content(content).hex != hex_id:
            raise IntegrityError(f"stored bytes for {hex_id[:12]} fail to rehash")
        produced_under = None
        raw = meta.get("produced_under")
        if raw is not None:
            produced_under = compute_execution_identity(
                spec_hash=ContentHash.from_hex(raw["spec"]),
                input_hash=ContentHash.from_hex(raw["inputs"]),
                predecessors={
                    p: ContentHash.from_hex(h) for p, h in raw["preds"].items()
                },
            )
        return ArtifactRecord(
            artifact_id=artifact_id,
            content=content,
            content_type=meta["content_type"],
            producer=meta["producer"],
            produced_under=produced_under,
            created_at=meta.get("created_at", 0.0),
        )

    def has_artifact(self, artifact_id: ContentHash) -> bool:
        return self._has_object(artifact_id.hex)

    def artifact_count(self) -> int:
        return len(self._object_ids())

    def record_execution(self, record: ExecutionRecord) -> None:
        """Write a ledger entry; rejects a different record under a known identity.

        Identical re-records are accepted and keep the original entry (volatile
        stats such as elapsed are not part of the determinism comparison).
        """
        for artifact in (record.canonical_artifact, *record.candidate_artifacts):
            if not self._has_object(artifact.hex):
                raise ArtifactNotFoundError(
                    f"record for node {record.node_id!r} references missing "
                    f"artifact {artifact.hex[:12]}"
                )
        hex_identity = record.identity.value.hex
        with self._lock:
            existing = self._get_record(hex_identity)
            if existing is not None:
                if _deterministic_fields(existing) != _deterministic_fields(record):
                    raise IdentityConflictError(
                        f"identity {hex_identity[:12]} already recorded with a "
                        f"different result for node {record.node_id!r}; "
                        "this indicates a non-deterministic executor"
                    )
                return
            self._put_record(hex_identity, record)
            self._append_node_history(record.node_id, hex_identity)

    def lookup_by_identity(
        self, identity: ExecutionIdentity | ContentHash
    ) -> ExecutionRecord | None:
        value = identity.value if isinstance(identity, ExecutionIdentity) else identity
        return self._get_record(value.hex)

    def records(self) -> Iterator[ExecutionRecord]:
        """All ledger entries, ordered by identity hex for determinism."""
        for hex_identity in sorted(self._record_ids()):
            record = self._get_record(hex_identity)
            if record is not None:
                yield record

    def node_history(self, node_id: str) -> list[ContentHash]:
        """Identities recorded for a node, oldest first."""
        return [ContentHash.from_hex(h) for h in self._node_history(node_id)]

    def latest_record_for_node(self, node_id: str) -> ExecutionRecord | None:
        history = self._node_history(node_id)
        if not history:
            return None
        return self._get_record(history[-1])

    def records_for_artifact(self, artifact_id: ContentHash) -> list[ExecutionRecord]:
        return [
            r for r in self.records() if r.canonical_artifact.hex == artifact_id.hex
        ]

    def put_run_report(self, run_id: str, payload: dict) -> None:
        if "/" in run_id or not run_id:
            raise StorageError(f"invalid run id {run_id!r}")
        self._write_report(run_id, canonical_json_bytes(payload) + b"\n")

    def get_run_report(self, run_id: str) -> dict:
        return json.loads(self._read_report(run_id))

    def list_runs(self) -> list[str]:
        return sorted(self._run_ids())


class MemoryStore(BaseStore):
    """Dict-backed store; same contract as FileStore, no persistence."""

    def __init__(self) -> None:
        super().__init__()
        self._objects: dict[str, tuple[bytes, dict]] = {}
        self._records: dict[str, ExecutionRecord] = {}
        self._history: dict[str, list[str]] = {}
        self._reports: dict[str, bytes] = {}

    def _has_object(self, hex_id: str) -> bool:
        return hex_id in self._objects

    def _write_object(self, hex_id: str, content: bytes, meta: dict) -> None:
        self._objects[hex_id] = (content, meta)

    def _read_object(self, hex_id: str) -> tuple[bytes, dict]:
        return self._objects[hex_id]

    def _object_ids(self) -> list[str]:
        return list(self._objects)

    def _get_record(self, hex_identity: str) -> ExecutionRecord | None:
        return self._records.get(hex_identity)

    def _put_record(self, hex_identity: str, record: ExecutionRecord) -> None:
        self._records[hex_identity] = record

    def _record_ids(self) -> list[str]:
        return list(self._records)

    def _node_history(self, node_id: str) -> list[str]:
        return list(self._history.get(node_id, []))

    def _append_node_history(self, node_id: str, hex_identity: str) -> None:
        self._history.setdefault(node_id, []).append(hex_identity)

    def _write_report(self, run_id: str, payload: bytes) -> None:
        self._reports[run_id] = payload

    def _read_report(self, run_id: str) -> bytes:
        try:
            return self._reports[run_id]
        except KeyError:
            raise StorageError(f"no run report {run_id!r}") from None

    def _run_ids(self) -> list[str]:
        return list(self._reports)


class FileStore(BaseStore):
    """Directory-backed store.

    Layout:
        objects/<2 hex>/<62 hex>        raw artifact bytes
        objects/<2 hex>/<62 hex>.json   artifact metadata (type, provenance)
        executions/<identity hex>       one canonical-JSON ledger entry
        nodes/<node id>                 newline-separated identity history
        runs/<run id>/report            canonical-JSON run report

    The ledger is append-only; the in-memory index is rebuilt from disk on
    open, so a fresh handle sees exactly what was recorded.
    """

    def __init__(self, root: str | Path) -> None:
        super().__init__()
        self.root = Path(root)
        for sub in ("objects", "executions", "nodes", "runs"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        self._index: dict[str, ExecutionRecord] = {}
        self._load_ledger()

    def _load_ledger(self) -> None:
        for path in sorted((self.root / "executions").iterdir()):
            if path.is_file():
                self._index[path.name] = record_from_doc(json.loads(path.read_bytes()))

    def _object_path(self, hex_id: str) -> Path:
        return self.root / "objects" / hex_id[:2] / hex_id[2:]

    def _has_object(self, hex_id: str) -> bool:
        return self._object_path(hex_id).exists()

    def _write_object(self, hex_id: str, content: bytes, meta: dict) -> None:
        path = self._object_path(hex_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(path, content)
        _atomic_write(
            path.with_name(path.name + ".json"), canonical_json_bytes(meta) + b"\n"
        )

    def _read_object(self, hex_id: str) -> tuple[bytes, dict]:
        path = self._object_path(hex_id)
        try:
            content = path.read_bytes()
            meta = json.loads(path.with_name(path.name + ".json").read_bytes())
        except OSError as exc:
            raise StorageError(f"cannot read artifact {hex_id[:12]}: {exc}") from exc
        return content, meta

    def _object_ids(self) -> list[str]:
        ids = []
        for shard in (self.root / "objects").iterdir():
            if not shard.is_dir():
                continue
            for path in shard.iterdir():
                if not path.name.endswith(".json"):
                    ids.append(shard.name + path.name)
        return ids

    def _get_record(self, hex_identity: str) -> ExecutionRecord | None:
        return self._index.get(hex_identity)

    def _put_record(self, hex_identity: str, record: ExecutionRecord) -> None:
        _atomic_write(self.root / "executions" / hex_identity, record_bytes(record))
        self._index[hex_identity] = record

    def _record_ids(self) -> list[str]:
        return list(self._index)

    def _node_history(self, node_id: str) -> list[str]:
        path = self.root / "nodes" / node_id
        if not path.exists():
            return []
        return path.read_text(encoding="utf-8").split()

    def _append_node_history(self, node_id: str, hex_identity: str) -> None:
        path = self.root / "nodes" / node_id
        with path.open("a", encoding="utf-8") as fh:
            fh.write(hex_identity + "\n")

    def _write_report(self, run_id: str, payload: bytes) -> None:
        run_dir = self.root / "runs" / run_id
        run_dir.mkdir(parents=True, exist_ok=True)
        _atomic_write(run_dir / "report", payload)

    def _read_report(self, run_id: str) -> bytes:
        path = self.root / "runs" / run_id / "report"
        try:
            return path.read_bytes()
        except OSError:
            raise StorageError(f"no run report {run_id!r}") from None

    def _run_ids(self) -> list[str]:
        return [p.name for p in (self.root / "runs").iterdir() if p.is_dir()]


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}.{threading.get_ident()}")
    try:
        tmp.write_bytes(payload)
        os.replace(tmp, path)
    except OSError as exc:
        raise StorageError(f"write failed for {path}: {exc}") from exc

