"""What an execution identity is made of, and how decisions are explained.

An identity hashes three things: the node's structural spec, its resolved
context inputs, and each predecessor's contribution by port. Change any one
and the identity (and every descendant identity) moves; the runtime can then
name the component that moved.
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
    compute_execution_identity,
    compute_input_hash,
    explain,
    hash_spec,
    run,
)

spec = NodeSpec("summarize", "synthesis", {"instructions": "short summary"},
                (PortDecl("notes", "text", "context"),))
binding = ContextBinding("notes", b"quarterly notes MARK:NOTES:1\n")

identity = compute_execution_identity(hash_spec(spec), compute_input_hash([binding]))
print("identity of a source node:")
print("  spec hash :", identity.spec_hash.hex[:16])
print("  input hash:", identity.input_hash.hex[:16])
print("  value     :", identity.value.hex[:16])

tweaked = NodeSpec("summarize", "synthesis", {"instructions": "LONG summary"},
                   (PortDecl("notes", "text", "context"),))
moved = compute_execution_identity(hash_spec(tweaked), compute_input_hash([binding]))
print("\nchange one config value and the identity moves:",
      identity.value.hex[:16], "->", moved.value.hex[:16])

# Now watch explain() attribute a recomputation to the moved component.
graph = WorkflowGraph(
    nodes=[
        NodeSpec("notes", "passthrough", input_ports=(PortDecl("raw", "text", "context"),)),
        NodeSpec("summary", "synthesis", {}, (PortDecl("notes", "text"),)),
        NodeSpec("digest", "synthesis", {}, (PortDecl("summary", "text"),)),
    ],
    edges=[Edge("notes", "summary", "notes"), Edge("summary", "digest", "summary")],
)
workspace = Workspace(
    graph=graph,
    context={("notes", "raw"): ContextBinding("raw", b"day one notes\n")},
    store=MemoryStore(),
)
run(workspace, "replay")

workspace, _ = apply_edit(workspace, EditEvent(
    "context-edit", "notes", b"day two notes\n", port="raw", event_id="demo"
))
report = run(workspace, "replay")

for node in ("notes", "summary", "digest"):
    print()
    print(explain(workspace.store, report, node).render())

# Provenance: each execution record keeps its full input surface, so the
# chain of artifacts behind any output can be walked from the store alone.
record = workspace.store.latest_record_for_node("digest")
print("\ndigest consumed, by port:")
for port, ref in sorted(record.input_surface.items()):
    print(f"  {port}: {ref.kind} {ref.hash.hex[:16]}")
