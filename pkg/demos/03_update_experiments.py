"""Reproduce the two controlled update experiments and print their tables.

The unrelated-branch task edits a source beside the memo chain: scoped
replay preserves the memo byte-for-byte while single-call regeneration
rewrites it and imports the unrelated material. The intermediate-edit task
pins new criteria content: everyone reflects the constraint in the final
memo, but only scoped replay updates the artifacts in between.
"""

from dagline.evaluation import (
    INTERMEDIATE_ARTIFACT_EDIT,
    UNRELATED_BRANCH_NOOP_UPDATE,
    run_experiment,
)

for task in (UNRELATED_BRANCH_NOOP_UPDATE, INTERMEDIATE_ARTIFACT_EDIT):
    report = run_experiment(task, repeats=3)
    print(report.render_table())
    orderings = report.efficiency_orderings()
    print(f"update-step input, scoped replay vs cheapest loop: "
          f"{orderings['dag_input_chars']:.0f} vs {orderings['min_loop_input_chars']:.0f} chars "
          f"({orderings['input_ratio_min']:.1f}x less)")
    print()
