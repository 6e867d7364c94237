"""Run orchestration: identity-based replay, scoped invalidation, explanation.

A run walks the graph in dependency order. For each node it computes the
execution identity from the node's spec, its context surface, and what its
predecessors contributed this run. An identity that matches a ledger entry
is proof the prior result still applies, so the artifact is restored instead
of recomputed. Edits move identities, and only the edited node's descendants
can see the difference, which is what scopes recomputation.

Ready nodes may execute concurrently; workers receive fully resolved state
and share nothing mutable, so published artifacts are schedule-independent.
"""

from __future__ import annotations

import random
import time
import uuid
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field, replace
from typing import Mapping

from dagline.errors import (
    DaglineError,
    ExecutorFailureError,
    MissingContextError,
    MissingDependencyError,
    UnknownNodeError,
    UnknownTargetError,
)
from dagline.executors import (
    ExecutorRegistry,
    NodeResult,
    ResolvedLocalState,
    default_registry,
    execute,
)
from dagline.graph import (
    ARTIFACT_EDIT,
    CONTEXT,
    CONTEXT_EDIT,
    ContextBinding,
    EditEvent,
    WorkflowGraph,
    descendants,
    topological_order,
    validate_graph,
)
from dagline.identity import (
    ContentHash,
    ExecutionIdentity,
    compute_execution_identity,
    compute_input_hash,
    hash_content,
    hash_spec,
)
from dagline.store import (
    CONTEXT_INPUT,
    DEPENDENCY_INPUT,
    BaseStore,
    ExecutionRecord,
    ExecutionStats,
    InputRef,
)

FULL = "full"
REPLAY = "replay"

REPLAYED = "replayed"
RECOMPUTED = "recomputed"
PINNED = "pinned"

IDENTITY_HIT = "identity-hit"
MISS_SPEC = "identity-miss:spec"
MISS_INPUT = "identity-miss:input"
MISS_PREDECESSOR = "identity-miss:predecessor"
MISS_NEW = "identity-miss:new"
OVERRIDE = "override"


@dataclass(frozen=True, slots=True)
class Workspace:
    """A graph plus everything needed to run it: context, overrides, store."""

    graph: WorkflowGraph
    context: Mapping[tuple[str, str], ContextBinding] = field(default_factory=dict)
    overrides: Mapping[str, ContentHash] = field(default_factory=dict)
    store: BaseStore = None  # type: ignore[assignment]
    registry: ExecutorRegistry = field(default_factory=default_registry)

    def __post_init__(self) -> None:
        object.__setattr__(self, "context", dict(self.context))
        object.__setattr__(self, "overrides", dict(self.overrides))
        for (node_id, port_name) in self.context:
            spec = self.graph.node(node_id)
            port = spec.port(port_name)
            if port.source != CONTEXT:
                raise UnknownTargetError(
                    f"context binding targets non-context port {node_id}:{port_name}"
                )
        for node_id in self.overrides:
            self.graph.node(node_id)


@dataclass(frozen=True, slots=True)
class NodeDecision:
    """Why one node was replayed, recomputed, or pinned this run."""

    node_id: str
    identity: ExecutionIdentity
    action: str
    reason: str
    artifact_id: ContentHash

    @property
    def contribution(self) -> ContentHash:
        """What this node feeds into consumer identities.

        Pinned nodes bypass their executor, so the only faithful identity for
        their output is the override content hash itself.
        """
        if self.action == PINNED:
            return self.artifact_id
        return self.identity.value


@dataclass(frozen=True, slots=True)
class RunReport:
    run_id: str
    mode: str
    decisions: tuple[NodeDecision, ...]
    final_artifacts: Mapping[str, ContentHash]
    totals: ExecutionStats
    elapsed: float
    failed_node: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "final_artifacts", dict(self.final_artifacts))

    def decision_for(self, node_id: str) -> NodeDecision:
        for decision in self.decisions:
            if decision.node_id == node_id:
                return decision
        raise UnknownNodeError(f"no decision for node {node_id!r} in run {self.run_id}")


def report_to_doc(report: RunReport) -> dict:
    return {
        "decisions": [
            {
                "action": d.action,
                "artifact": d.artifact_id.hex,
                "identity": {
                    "inputs": d.identity.input_hash.hex,
                    "preds": {p: h.hex for p, h in d.identity.predecessors.items()},
                    "spec": d.identity.spec_hash.hex,
                    "value": d.identity.value.hex,
                },
                "node_id": d.node_id,
                "reason": d.reason,
            }
            for d in report.decisions
        ],
        "elapsed": report.elapsed,
        "failed_node": report.failed_node,
        "final_artifacts": {n: h.hex for n, h in report.final_artifacts.items()},
        "mode": report.mode,
        "run_id": report.run_id,
        "totals": {
            "elapsed": report.totals.elapsed,
            "input_chars": report.totals.input_chars,
            "output_chars": report.totals.output_chars,
            "synthesis_calls": report.totals.synthesis_calls,
        },
    }


def report_from_doc(doc: dict) -> RunReport:
    decisions = []
    for d in doc["decisions"]:
        ident = d["identity"]
        decisions.append(NodeDecision(
            node_id=d["node_id"],
            identity=compute_execution_identity(
                spec_hash=ContentHash.from_hex(ident["spec"]),
                input_hash=ContentHash.from_hex(ident["inputs"]),
                predecessors={
                    p: ContentHash.from_hex(h) for p, h in ident["preds"].items()
                },
            ),
            action=d["action"],
            reason=d["reason"],
            artifact_id=ContentHash.from_hex(d["artifact"]),
        ))
    totals = doc["totals"]
    return RunReport(
        run_id=doc["run_id"],
        mode=doc["mode"],
        decisions=tuple(decisions),
        final_artifacts={
            n: ContentHash.from_hex(h) for n, h in doc["final_artifacts"].items()
        },
        totals=ExecutionStats(
            input_chars=totals["input_chars"],
            output_chars=totals["output_chars"],
            synthesis_calls=totals["synthesis_calls"],
            elapsed=totals["elapsed"],
        ),
        elapsed=doc["elapsed"],
        failed_node=doc.get("failed_node"),
    )


def resolve_local_state(
    workspace: Workspace, node_id: str, published: Mapping[str, ContentHash]
) -> ResolvedLocalState:
    """Materialize exactly what one node may see: its declared ports, nothing else."""
    spec = workspace.graph.node(node_id)
    context_entries = []
    for port in spec.context_ports:
        binding = workspace.context.get((node_id, port.name))
        if binding is None:
            raise MissingContextError(
                f"no context bound for {node_id}:{port.name}"
            )
        context_entries.append(binding)
    producers = {e.port: e.producer for e in workspace.graph.edges_into(node_id)}
    dependency_artifacts = {}
    for port in spec.dependency_ports:
        producer = producers.get(port.name)
        if producer is None or producer not in published:
            raise MissingDependencyError(
                f"dependency port {node_id}:{port.name} has no published producer"
            )
        dependency_artifacts[port.name] = workspace.store.get_artifact(published[producer])
    return ResolvedLocalState(
        context_entries=tuple(sorted(context_entries, key=lambda b: b.port)),
        dependency_artifacts=dependency_artifacts,
    )


def node_identity(
    workspace: Workspace,
    node_id: str,
    contributions: Mapping[str, ContentHash],
) -> ExecutionIdentity:
    """Identity of a node given what each predecessor contributed this run."""
    spec = workspace.graph.node(node_id)
    bindings = []
    for port in spec.context_ports:
        binding = workspace.context.get((node_id, port.name))
        if binding is None:
            raise MissingContextError(f"no context bound for {node_id}:{port.name}")
        bindings.append(binding)
    producers = {e.port: e.producer for e in workspace.graph.edges_into(node_id)}
    preds = {}
    for port in spec.dependency_ports:
        producer = producers.get(port.name)
        if producer is None or producer not in contributions:
            raise MissingDependencyError(
                f"predecessor for {node_id}:{port.name} is undecided"
            )
        preds[port.name] = contributions[producer]
    return compute_execution_identity(
        spec_hash=hash_spec(spec),
        input_hash=compute_input_hash(bindings),
        predecessors=preds,
    )


def apply_edit(workspace: Workspace, edit: EditEvent) -> tuple[Workspace, frozenset[str]]:
    """Apply one edit; returns the revised workspace and the dirty set.

    A context-edit rebinds a port and dirties the target plus its
    descendants. An artifact-edit stores the new content and pins it over
    the node's output: the node itself will not recompute, so only its
    descendants are dirty.
    """
    graph = workspace.graph
    if edit.node_id not in graph.nodes:
        raise UnknownTargetError(f"edit targets unknown node {edit.node_id!r}")
    if edit.kind == CONTEXT_EDIT:
        spec = graph.node(edit.node_id)
        try:
            port = spec.port(edit.port or "")
        except KeyError:
            raise UnknownTargetError(
                f"edit targets unknown port {edit.node_id}:{edit.port}"
            ) from None
        if port.source != CONTEXT:
            raise UnknownTargetError(
                f"context-edit targets dependency port {edit.node_id}:{edit.port}"
            )
        context = dict(workspace.context)
        context[(edit.node_id, port.name)] = ContextBinding(
            port=port.name, content=edit.new_content, content_type=port.artifact_type
        )
        dirty = descendants(graph, {edit.node_id}) | {edit.node_id}
        return replace(workspace, context=context), frozenset(dirty)

    if edit.kind == ARTIFACT_EDIT:
        has_prior = workspace.store.latest_record_for_node(edit.node_id) is not None
        if not has_prior and edit.node_id not in workspace.overrides:
            raise UnknownTargetError(
                f"artifact-edit targets node {edit.node_id!r} with no published artifact"
            )
        spec = graph.node(edit.node_id)
        artifact_id = workspace.store.put_artifact(
            edit.new_content,
            content_type=spec.output_type,
            producer=edit.node_id,
            produced_under=None,
        )
        overrides = dict(workspace.overrides)
        overrides[edit.node_id] = artifact_id
        return replace(workspace, overrides=overrides), descendants(graph, {edit.node_id})

    raise UnknownTargetError(f"unknown edit kind {edit.kind!r}")


class _RunState:
    """Mutable bookkeeping for one run; touched only by the driving thread."""

    def __init__(self, workspace: Workspace, mode: str) -> None:
        self.workspace = workspace
        self.mode = mode
        self.published: dict[str, ContentHash] = {}
        self.contributions: dict[str, ContentHash] = {}
        self.decisions: dict[str, NodeDecision] = {}
        self.totals = ExecutionStats()

    def preds_ready(self, node_id: str) -> bool:
        return all(
            p in self.published for p in self.workspace.graph.predecessors(node_id)
        )

    def decide(self, node_id: str) -> ExecutionIdentity | None:
        """Settle replay/pin immediately; return the identity if execution is needed."""
        workspace = self.workspace
        spec = workspace.graph.node(node_id)
        identity = node_identity(workspace, node_id, self.contributions)

        override = workspace.overrides.get(node_id)
        if override is not None:
            if not workspace.store.has_artifact(override):
                raise UnknownTargetError(
                    f"override for {node_id!r} references missing artifact"
                )
            self._finish(node_id, NodeDecision(
                node_id=node_id, identity=identity, action=PINNED,
                reason=OVERRIDE, artifact_id=override,
            ))
            return None

        deterministic = workspace.registry.is_deterministic(spec.executor_kind)
        if self.mode == REPLAY and deterministic:
            record = workspace.store.lookup_by_identity(identity)
            if record is not None:
                workspace.store.get_artifact(record.canonical_artifact)  # integrity
                self._finish(node_id, NodeDecision(
                    node_id=node_id, identity=identity, action=REPLAYED,
                    reason=IDENTITY_HIT, artifact_id=record.canonical_artifact,
                ))
                return None
        return identity

    def finalize(
        self, node_id: str, identity: ExecutionIdentity,
        state: ResolvedLocalState, result: NodeResult,
    ) -> None:
        """Publish an executed node's output and write its ledger entry."""
        workspace = self.workspace
        spec = workspace.graph.node(node_id)
        reason = self._miss_reason(node_id, identity)

        content, content_type = result.canonical_output
        canonical_id = workspace.store.put_artifact(
            content, content_type=content_type, producer=node_id, produced_under=identity
        )
        candidate_ids = [canonical_id]
        for extra_content, extra_type in result.candidates:
            extra_id = workspace.store.put_artifact(
                extra_content, content_type=extra_type,
                producer=node_id, produced_under=identity,
            )
            if extra_id.hex != canonical_id.hex:
                candidate_ids.append(extra_id)

        if workspace.registry.is_deterministic(spec.executor_kind):
            surface: dict[str, InputRef] = {}
            for binding in state.context_entries:
                surface[binding.port] = InputRef(
                    CONTEXT_INPUT, hash_content(binding.content)
                )
            for port, artifact in state.dependency_artifacts.items():
                surface[port] = InputRef(DEPENDENCY_INPUT, artifact.artifact_id)
            workspace.store.record_execution(ExecutionRecord(
                identity=identity,
                node_id=node_id,
                canonical_artifact=canonical_id,
                candidate_artifacts=tuple(candidate_ids),
                input_surface=surface,
                stats=result.stats,
            ))

        self.totals = self.totals + result.stats
        self._finish(node_id, NodeDecision(
            node_id=node_id, identity=identity, action=RECOMPUTED,
            reason=reason, artifact_id=canonical_id,
        ))

    def _miss_reason(self, node_id: str, identity: ExecutionIdentity) -> str:
        store = self.workspace.store
        if store.lookup_by_identity(identity) is not None:
            return IDENTITY_HIT  # full-mode recompute over a warm ledger
        prior = store.latest_record_for_node(node_id)
        if prior is None:
            return MISS_NEW
        component = diverging_component(prior.identity, identity)
        if component == "spec":
            return MISS_SPEC
        if component == "input":
            return MISS_INPUT
        return MISS_PREDECESSOR

    def _finish(self, node_id: str, decision: NodeDecision) -> None:
        self.decisions[node_id] = decision
        self.published[node_id] = decision.artifact_id
        self.contributions[node_id] = decision.contribution


def diverging_component(prior: ExecutionIdentity, current: ExecutionIdentity) -> str:
    """First identity component that moved: spec, input, or predecessor:<port>."""
    if prior.spec_hash.hex != current.spec_hash.hex:
        return "spec"
    if prior.input_hash.hex != current.input_hash.hex:
        return "input"
    ports = sorted(set(prior.predecessors) | set(current.predecessors))
    for port in ports:
        a = prior.predecessors.get(port)
        b = current.predecessors.get(port)
        if a is None or b is None or a.hex != b.hex:
            return f"predecessor:{port}"
    return "none"


def run(
    workspace: Workspace,
    mode: str = REPLAY,
    *,
    run_id: str | None = None,
    workers: int = 1,
    schedule_rng: random.Random | None = None,
) -> RunReport:
    """Execute the workspace and persist a run report.

    ``replay`` restores ledger hits; ``full`` re-executes everything (the
    ledger then re-verifies determinism via idempotent re-records). With
    ``workers > 1`` ready nodes execute concurrently; ``schedule_rng``
    randomizes the sequential processing order instead. Any schedule
    publishes identical artifacts and the decision list is always reported
    in topological order.
    """
    if mode not in (FULL, REPLAY):
        raise ValueError(f"unknown run mode {mode!r}")
    if workspace.store is None:
        raise DaglineError("workspace has no store")
    violations = validate_graph(workspace.graph, workspace.registry)
    if violations:
        raise DaglineError(
            "graph is invalid: " + "; ".join(str(v) for v in violations[:5])
        )

    order = topological_order(workspace.graph)
    state = _RunState(workspace, mode)
    # Generated ids sort chronologically so "latest run" is well defined.
    run_id = run_id or f"{time.time_ns():019d}-{uuid.uuid4().hex[:6]}"
    started = time.perf_counter()

    try:
        if workers > 1:
            _drive_parallel(state, order, workers)
        else:
            _drive_sequential(state, order, schedule_rng)
    except ExecutorFailureError as exc:
        elapsed = time.perf_counter() - started
        partial = RunReport(
            run_id=run_id,
            mode=mode,
            decisions=tuple(
                state.decisions[n] for n in order if n in state.decisions
            ),
            final_artifacts=dict(state.published),
            totals=state.totals,
            elapsed=elapsed,
            failed_node=exc.node_id,
        )
        workspace.store.put_run_report(run_id, report_to_doc(partial))
        exc.partial_report = partial  # type: ignore[attr-defined]
        raise

    elapsed = time.perf_counter() - started
    report = RunReport(
        run_id=run_id,
        mode=mode,
        decisions=tuple(state.decisions[n] for n in order),
        final_artifacts=dict(state.published),
        totals=state.totals,
        elapsed=elapsed,
    )
    workspace.store.put_run_report(run_id, report_to_doc(report))
    return report


def _process(state: _RunState, node_id: str) -> None:
    identity = state.decide(node_id)
    if identity is None:
        return
    local = resolve_local_state(state.workspace, node_id, state.published)
    spec = state.workspace.graph.node(node_id)
    result = execute(spec, local, state.workspace.registry)
    state.finalize(node_id, identity, local, result)


def _drive_sequential(
    state: _RunState, order: list[str], schedule_rng: random.Random | None
) -> None:
    if schedule_rng is None:
        for node_id in order:
            _process(state, node_id)
        return
    pending = set(order)
    while pending:
        ready = sorted(n for n in pending if state.preds_ready(n))
        node_id = schedule_rng.choice(ready)
        _process(state, node_id)
        pending.remove(node_id)


def _drive_parallel(state: _RunState, order: list[str], workers: int) -> None:
    workspace = state.workspace
    pending = set(order)
    in_flight: dict[Future, tuple[str, ExecutionIdentity, ResolvedLocalState]] = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        try:
            while pending or in_flight:
                scheduled = True
                while scheduled:
                    scheduled = False
                    for node_id in [n for n in order if n in pending]:
                        if not state.preds_ready(node_id):
                            continue
                        pending.remove(node_id)
                        identity = state.decide(node_id)
                        if identity is None:
                            scheduled = True  # may unblock consumers immediately
                            continue
                        local = resolve_local_state(workspace, node_id, state.published)
                        spec = workspace.graph.node(node_id)
                        future = pool.submit(execute, spec, local, workspace.registry)
                        in_flight[future] = (node_id, identity, local)
                if not in_flight:
                    continue
                done, _ = wait(in_flight, return_when=FIRST_COMPLETED)
                for future in sorted(done, key=lambda f: in_flight[f][0]):
                    node_id, identity, local = in_flight.pop(future)
                    state.finalize(node_id, identity, local, future.result())
        except BaseException:
            for future in in_flight:
                future.cancel()
            raise


@dataclass(frozen=True, slots=True)
class Explanation:
    """Why a node was (or was not) reusable in a given run."""

    node_id: str
    action: str
    reason: str
    divergence: str | None
    current_identity: str
    prior_identity: str | None

    def render(self) -> str:
        lines = [
            f"node: {self.node_id}",
            f"action: {self.action}",
            f"reason: {self.reason}",
            f"identity: {self.current_identity}",
        ]
        if self.prior_identity:
            lines.append(f"prior identity: {self.prior_identity}")
        if self.divergence:
            lines.append(f"diverged component: {self.divergence}")
        return "\n".join(lines)


def explain(store: BaseStore, report: RunReport, node_id: str) -> Explanation:
    """Attribute a node's run decision to the identity component that moved."""
    decision = report.decision_for(node_id)
    if decision.action in (REPLAYED, PINNED) or decision.reason == IDENTITY_HIT:
        return Explanation(
            node_id=node_id,
            action=decision.action,
            reason=decision.reason,
            divergence=None,
            current_identity=decision.identity.value.hex,
            prior_identity=None,
        )
    current_hex = decision.identity.value.hex
    prior: ExecutionIdentity | None = None
    for identity_value in reversed(store.node_history(node_id)):
        if identity_value.hex != current_hex:
            record = store.lookup_by_identity(identity_value)
            if record is not None:
                prior = record.identity
                break
    if prior is None:
        return Explanation(
            node_id=node_id,
            action=decision.action,
            reason=decision.reason,
            divergence="new",
            current_identity=current_hex,
            prior_identity=None,
        )
    return Explanation(
        node_id=node_id,
        action=decision.action,
        reason=decision.reason,
        divergence=diverging_component(prior, decision.identity),
        current_identity=current_hex,
        prior_identity=prior.value.hex,
    )
