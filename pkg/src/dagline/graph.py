"""Workflow graph model and structural queries.

A workflow is a DAG of artifact-producing nodes. Edges are named: each edge
binds a producer's canonical output to one declared input port of a consumer.
Ports that are not fed by an edge are fed by an immutable context binding
supplied at run time; a port is never fed by both.

All types here are immutable after construction and all operations are pure,
so the module is safe for unrestricted concurrent use.
"""

from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping

from dagline.errors import CycleError, UnknownNodeError

if TYPE_CHECKING:
    from dagline.executors import ExecutorRegistry

DEPENDENCY = "dependency"
CONTEXT = "context"


@dataclass(frozen=True, slots=True)
class PortDecl:
    """One declared input slot: where its bytes come from and what they are."""

    name: str
    artifact_type: str
    source: str = DEPENDENCY

    def __post_init__(self) -> None:
        if self.source not in (DEPENDENCY, CONTEXT):
            raise ValueError(f"port source must be dependency or context, got {self.source!r}")


@dataclass(frozen=True, slots=True)
class NodeSpec:
    """A node's structural specification.

    The executor config is part of the structure: the same procedure with
    different parameters is a different computation, so config participates
    in the execution identity.
    """

    node_id: str
    executor_kind: str
    config: Mapping[str, object] = field(default_factory=dict)
    input_ports: tuple[PortDecl, ...] = ()
    output_type: str = "text"

    def __post_init__(self) -> None:
        object.__setattr__(self, "config", dict(self.config))
        object.__setattr__(self, "input_ports", tuple(self.input_ports))

    def port(self, name: str) -> PortDecl:
        for p in self.input_ports:
            if p.name == name:
                return p
        raise KeyError(f"node {self.node_id!r} has no port {name!r}")

    @property
    def dependency_ports(self) -> tuple[PortDecl, ...]:
        return tuple(p for p in self.input_ports if p.source == DEPENDENCY)

    @property
    def context_ports(self) -> tuple[PortDecl, ...]:
        return tuple(p for p in self.input_ports if p.source == CONTEXT)


@dataclass(frozen=True, slots=True)
class ContextBinding:
    """Immutable bytes bound to one context port for the duration of a run."""

    port: str
    content: bytes
    content_type: str = "text"


CONTEXT_EDIT = "context-edit"
ARTIFACT_EDIT = "artifact-edit"


@dataclass(frozen=True, slots=True)
class EditEvent:
    """A revision applied between runs.

    A context-edit replaces the bytes bound to one context port. An
    artifact-edit pins replacement content over a node's published output
    without touching the node's spec.
    """

    kind: str
    node_id: str
    new_content: bytes
    port: str | None = None
    event_id: str = ""

    def __post_init__(self) -> None:
        if self.kind not in (CONTEXT_EDIT, ARTIFACT_EDIT):
            raise ValueError(f"unknown edit kind {self.kind!r}")
        if self.kind == CONTEXT_EDIT and not self.port:
            raise ValueError("context-edit requires a port name")


@dataclass(frozen=True, slots=True)
class Edge:
    """producer -> consumer, delivering into the consumer's named port."""

    producer: str
    consumer: str
    port: str


@dataclass(frozen=True, slots=True)
class Violation:
    """One broken graph invariant; validation reports these as data."""

    code: str
    message: str
    nodes: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class WorkflowGraph:
    """Immutable DAG of node specs and named dependency edges.

    Declaration order of nodes and edges is not semantic: graphs built from
    permuted inputs compare equal and hash identically downstream.
    """

    __slots__ = ("_nodes", "_edges", "_consumers", "_producers")

    def __init__(self, nodes: Iterable[NodeSpec], edges: Iterable[Edge | tuple[str, str, str]]) -> None:
        self._nodes: dict[str, NodeSpec] = {}
        for spec in nodes:
            if spec.node_id in self._nodes:
                raise ValueError(f"duplicate node id {spec.node_id!r}")
            self._nodes[spec.node_id] = spec
        self._edges = frozenset(
            e if isinstance(e, Edge) else Edge(*e) for e in edges
        )
        self._consumers: dict[str, set[str]] = defaultdict(set)
        self._producers: dict[str, set[str]] = defaultdict(set)
        for e in self._edges:
            self._consumers[e.producer].add(e.consumer)
            self._producers[e.consumer].add(e.producer)

    @property
    def nodes(self) -> Mapping[str, NodeSpec]:
        return dict(self._nodes)

    @property
    def edges(self) -> frozenset[Edge]:
        return self._edges

    def node(self, node_id: str) -> NodeSpec:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNodeError(f"unknown node {node_id!r}") from None

    def node_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._nodes))

    def edges_into(self, node_id: str) -> tuple[Edge, ...]:
        return tuple(sorted(
            (e for e in self._edges if e.consumer == node_id),
            key=lambda e: (e.port, e.producer),
        ))

    def predecessors(self, node_id: str) -> frozenset[str]:
        self.node(node_id)
        return frozenset(self._producers.get(node_id, ()))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WorkflowGraph):
            return NotImplemented
        return self._nodes == other._nodes and self._edges == other._edges

    def __repr__(self) -> str:
        return f"WorkflowGraph({len(self._nodes)} nodes, {len(self._edges)} edges)"


def validate_graph(
    graph: WorkflowGraph, registry: ExecutorRegistry | None = None
) -> list[Violation]:
    """Check every structural invariant; an empty report means valid.

    Checks: edge endpoints exist, edges land on declared dependency ports,
    every dependency port has exactly one producer, port declarations are
    unique per node, executor kinds are registered, and the edge relation is
    acyclic. Context-port *bindings* are a workspace concern and are checked
    when local state is resolved, not here.
    """
    violations: list[Violation] = []
    known = set(graph.nodes)

    for spec in graph.nodes.values():
        seen_ports: set[str] = set()
        for port in spec.input_ports:
            if port.name in seen_ports:
                violations.append(Violation(
                    "duplicate-port",
                    f"node {spec.node_id!r} declares port {port.name!r} twice",
                    (spec.node_id,),
                ))
            seen_ports.add(port.name)
        if registry is not None and not registry.is_registered(spec.executor_kind):
            violations.append(Violation(
                "unknown-executor",
                f"node {spec.node_id!r} names unregistered executor {spec.executor_kind!r}",
                (spec.node_id,),
            ))

    bindings: dict[tuple[str, str], int] = defaultdict(int)
    for edge in sorted(graph.edges, key=lambda e: (e.consumer, e.port, e.producer)):
        endpoint_missing = False
        for endpoint in (edge.producer, edge.consumer):
            if endpoint not in known:
                violations.append(Violation(
                    "unknown-edge-endpoint",
                    f"edge {edge.producer}->{edge.consumer}:{edge.port} names unknown node {endpoint!r}",
                    (endpoint,),
                ))
                endpoint_missing = True
        if endpoint_missing:
            continue
        consumer = graph.nodes[edge.consumer]
        declared = {p.name: p for p in consumer.input_ports}
        if edge.port not in declared:
            violations.append(Violation(
                "undeclared-port",
                f"edge into {edge.consumer!r} targets undeclared port {edge.port!r}",
                (edge.consumer,),
            ))
            continue
        if declared[edge.port].source == CONTEXT:
            violations.append(Violation(
                "context-port-edge",
                f"port {edge.port!r} of node {edge.consumer!r} is context-bound but has an incoming edge",
                (edge.consumer,),
            ))
        bindings[(edge.consumer, edge.port)] += 1

    for (consumer, port), count in sorted(bindings.items()):
        if count > 1:
            violations.append(Violation(
                "duplicate-binding",
                f"port {port!r} of node {consumer!r} is bound by {count} edges",
                (consumer,),
            ))

    for spec in graph.nodes.values():
        for port in spec.dependency_ports:
            if bindings.get((spec.node_id, port.name), 0) == 0:
                violations.append(Violation(
                    "unbound-port",
                    f"dependency port {port.name!r} of node {spec.node_id!r} has no incoming edge",
                    (spec.node_id,),
                ))

    cycle = _find_cycle_members(graph)
    if cycle:
        violations.append(Violation(
            "cycle",
            "dependency edges form a cycle among {" + ", ".join(sorted(cycle)) + "}",
            tuple(sorted(cycle)),
        ))

    return violations


def _find_cycle_members(graph: WorkflowGraph) -> frozenset[str]:
    """Nodes that cannot be scheduled because they sit on or behind a cycle."""
    indegree = {n: 0 for n in graph.nodes}
    consumers: dict[str, set[str]] = defaultdict(set)
    for e in graph.edges:
        if e.producer in indegree and e.consumer in indegree:
            if e.consumer not in consumers[e.producer]:
                consumers[e.producer].add(e.consumer)
                indegree[e.consumer] += 1
    queue = [n for n, d in indegree.items() if d == 0]
    removed = 0
    while queue:
        n = queue.pop()
        removed += 1
        for c in consumers[n]:
            indegree[c] -= 1
            if indegree[c] == 0:
                queue.append(c)
    if removed == len(indegree):
        return frozenset()
    return frozenset(n for n, d in indegree.items() if d > 0)


def topological_order(graph: WorkflowGraph) -> list[str]:
    """Dependency order with lexicographic tie-breaking.

    The order is a pure function of the graph, so scheduling traces and
    report layouts are reproducible across processes.
    """
    indegree = {n: 0 for n in graph.nodes}
    consumers: dict[str, set[str]] = defaultdict(set)
    for e in graph.edges:
        if e.producer not in indegree or e.consumer not in indegree:
            raise UnknownNodeError(f"edge endpoint missing from graph: {e}")
        if e.consumer not in consumers[e.producer]:
            consumers[e.producer].add(e.consumer)
            indegree[e.consumer] += 1
    ready = [n for n, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for c in sorted(consumers[n]):
            indegree[c] -= 1
            if indegree[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != len(indegree):
        stuck = sorted(n for n, d in indegree.items() if d > 0)
        raise CycleError("graph has no topological order; cycle among " + ", ".join(stuck))
    return order


def ready_set(graph: WorkflowGraph, completed: Iterable[str]) -> frozenset[str]:
    """Non-completed nodes whose dependency producers have all completed."""
    done = set(completed)
    for n in done:
        if n not in graph.nodes:
            raise UnknownNodeError(f"completed set names unknown node {n!r}")
    ready = set()
    for node_id in graph.nodes:
        if node_id in done:
            continue
        if graph.predecessors(node_id) <= done:
            ready.add(node_id)
    return frozenset(ready)


def descendants(graph: WorkflowGraph, roots: Iterable[str]) -> frozenset[str]:
    """All nodes reachable from the roots via one or more edges, roots excluded."""
    root_set = set(roots)
    for n in root_set:
        if n not in graph.nodes:
            raise UnknownNodeError(f"unknown root {n!r}")
    consumers: dict[str, set[str]] = defaultdict(set)
    for e in graph.edges:
        consumers[e.producer].add(e.consumer)
    seen: set[str] = set()
    frontier = list(root_set)
    while frontier:
        node = frontier.pop()
        for c in consumers[node]:
            if c not in seen:
                seen.add(c)
                frontier.append(c)
    return frozenset(seen - root_set)


def ancestors(graph: WorkflowGraph, node_id: str) -> frozenset[str]:
    """All transitive producers feeding the node."""
    graph.node(node_id)
    seen: set[str] = set()
    frontier = [node_id]
    while frontier:
        node = frontier.pop()
        for p in graph.predecessors(node):
            if p not in seen:
                seen.add(p)
                frontier.append(p)
    return frozenset(seen - {node_id})
