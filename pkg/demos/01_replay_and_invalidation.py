"""Build a small workflow, run it, replay it, then edit one source.

Shows the core loop: a cold run computes everything, an unchanged rerun
restores everything from the store, and an edit recomputes exactly the
edited node plus its descendants.
"""

from dagline import (
    ContextBinding,
    Edge,
    EditEvent,
    MemoryStore,
    NodeSpec,
    PortDecl,
    WorkflowGraph,
    Workspace,
    apply_edit,
    run,
)

# Two ingest sources feed an analysis; the analysis and one source feed a memo.
graph = WorkflowGraph(
    nodes=[
        NodeSpec("pull_metrics", "passthrough",
                 input_ports=(PortDecl("raw", "text", "context"),)),
        NodeSpec("pull_policies", "passthrough",
                 input_ports=(PortDecl("raw", "text", "context"),)),
        NodeSpec("analysis", "synthesis", {"instructions": "reconcile metrics with policy"},
                 (PortDecl("metrics", "text"), PortDecl("policies", "text"))),
        NodeSpec("memo", "synthesis", {"instructions": "weekly memo"},
                 (PortDecl("analysis", "text"), PortDecl("policies", "text"))),
    ],
    edges=[
        Edge("pull_metrics", "analysis", "metrics"),
        Edge("pull_policies", "analysis", "policies"),
        Edge("analysis", "memo", "analysis"),
        Edge("pull_policies", "memo", "policies"),
    ],
)

workspace = Workspace(
    graph=graph,
    context={
        ("pull_metrics", "raw"): ContextBinding("raw", b"visits up 12% MARK:METRICS:1\n"),
        ("pull_policies", "raw"): ContextBinding("raw", b"policy: MARK:POLICY:1 applies\n"),
    },
    store=MemoryStore(),
)

print("== cold run: every node computes ==")
report = run(workspace, "replay")
for d in report.decisions:
    print(f"  {d.node_id:<14} {d.action:<11} {d.reason}")

print("\n== unchanged rerun: every node replays, zero synthesis calls ==")
report = run(workspace, "replay")
for d in report.decisions:
    print(f"  {d.node_id:<14} {d.action:<11} {d.reason}")
print(f"  synthesis calls this run: {report.totals.synthesis_calls}")

print("\n== edit the metrics source ==")
edit = EditEvent("context-edit", "pull_metrics", b"visits up 20% MARK:METRICS:2\n",
                 port="raw", event_id="demo-edit-1")
workspace, dirty = apply_edit(workspace, edit)
print(f"  dirty set: {sorted(dirty)}")

report = run(workspace, "replay")
print("\n== rerun after edit: only the dirty nodes recompute ==")
for d in report.decisions:
    print(f"  {d.node_id:<14} {d.action:<11} {d.reason}")

memo = workspace.store.get_artifact(report.final_artifacts["memo"])
print("\nfinal memo now carries the new marker:",
      b"MARK:METRICS:2" in memo.content)
