"""Shared fixtures: tiny canned graphs and a seeded random-workflow generator."""

from __future__ import annotations

import random

import pytest

from dagline.graph import (
    ARTIFACT_EDIT,
    CONTEXT_EDIT,
    ContextBinding,
    Edge,
    EditEvent,
    NodeSpec,
    PortDecl,
    WorkflowGraph,
)
from dagline.runtime import Workspace
from dagline.store import MemoryStore


def ctx_port(name: str = "raw") -> PortDecl:
    return PortDecl(name, "text", source="context")


def dep_port(name: str) -> PortDecl:
    return PortDecl(name, "text", source="dependency")


def source_node(node_id: str, executor: str = "passthrough") -> NodeSpec:
    return NodeSpec(node_id, executor, {}, (ctx_port(),), "text")


def synthesis_node(node_id: str, ports: tuple[PortDecl, ...], **config) -> NodeSpec:
    return NodeSpec(node_id, "synthesis", dict(config), ports, "text")


def chain_graph() -> WorkflowGraph:
    """retrieval -> analysis -> synthesis, plus a disconnected node."""
    return WorkflowGraph(
        [
            source_node("retrieval"),
            synthesis_node("analysis", (dep_port("upstream"),)),
            synthesis_node("synthesis", (dep_port("upstream"),)),
            source_node("unrelated"),
        ],
        [
            Edge("retrieval", "analysis", "upstream"),
            Edge("analysis", "synthesis", "upstream"),
        ],
    )


def diamond_graph() -> WorkflowGraph:
    return WorkflowGraph(
        [
            source_node("a", executor="synthesis"),
            synthesis_node("b", (dep_port("left"),)),
            synthesis_node("c", (dep_port("right"),)),
            synthesis_node("d", (dep_port("left"), dep_port("right"))),
        ],
        [
            Edge("a", "b", "left"),
            Edge("a", "c", "right"),
            Edge("b", "d", "left"),
            Edge("c", "d", "right"),
        ],
    )


def workspace_for(graph: WorkflowGraph, contents: dict[str, bytes] | None = None) -> Workspace:
    """Bind every context port; ``contents`` overrides per node id."""
    contents = contents or {}
    context = {}
    for node_id, spec in graph.nodes.items():
        for port in spec.context_ports:
            payload = contents.get(node_id, f"{node_id}:{port.name} source text".encode())
            context[(node_id, port.name)] = ContextBinding(port.name, payload, port.artifact_type)
    return Workspace(graph=graph, context=context, store=MemoryStore())


def chain_workspace(**kwargs) -> Workspace:
    return workspace_for(chain_graph(), **kwargs)


def random_workflow(
    rng: random.Random, max_nodes: int = 8, allow_passthrough: bool = True
) -> Workspace:
    """A random valid DAG workspace: sources are passthrough or synthesis,
    interior nodes are synthesis; every context port gets random bytes."""
    count = rng.randint(1, max_nodes)
    ids = [f"n{i:02d}" for i in range(count)]
    nodes: list[NodeSpec] = []
    edges: list[Edge] = []
    context: dict[tuple[str, str], ContextBinding] = {}
    for j, node_id in enumerate(ids):
        upstream = ids[:j]
        dep_count = min(len(upstream), rng.choice((0, 0, 1, 1, 2, 3)))
        producers = rng.sample(upstream, dep_count) if dep_count else []
        ports: list[PortDecl] = []
        for k, producer in enumerate(sorted(producers)):
            port = dep_port(f"in{k}")
            ports.append(port)
            edges.append(Edge(producer, node_id, port.name))
        has_context = not producers or rng.random() < 0.3
        if has_context:
            ports.append(ctx_port("ctx"))
            context[(node_id, "ctx")] = ContextBinding(
                "ctx", rng.randbytes(rng.randint(4, 64)), "text"
            )
        if allow_passthrough and not producers and len(ports) == 1 and rng.random() < 0.5:
            nodes.append(NodeSpec(node_id, "passthrough", {}, tuple(ports), "text"))
        else:
            nodes.append(NodeSpec(
                node_id, "synthesis",
                {"instructions": f"step {j}", "salt": rng.randint(0, 9)},
                tuple(ports), "text",
            ))
    graph = WorkflowGraph(nodes, edges)
    return Workspace(graph=graph, context=context, store=MemoryStore())


def random_edit(rng: random.Random, workspace: Workspace) -> EditEvent:
    """A random single edit; new content always differs from current."""
    context_keys = sorted(workspace.context)
    if context_keys and (rng.random() < 0.6 or len(workspace.graph.nodes) == 1):
        node_id, port = context_keys[rng.randrange(len(context_keys))]
        old = workspace.context[(node_id, port)].content
        new = rng.randbytes(rng.randint(4, 64))
        while new == old:
            new = rng.randbytes(rng.randint(4, 64))
        return EditEvent(CONTEXT_EDIT, node_id, new, port=port, event_id="random-ctx")
    node_ids = sorted(workspace.graph.nodes)
    node_id = node_ids[rng.randrange(len(node_ids))]
    return EditEvent(
        ARTIFACT_EDIT, node_id,
        b"pinned:" + rng.randbytes(rng.randint(4, 32)),
        event_id="random-pin",
    )


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240811)
