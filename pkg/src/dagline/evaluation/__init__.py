"""Controlled update experiments over the staged policy-memo workflow.

Two scenarios probe maintained-state quality: an edit in a branch unrelated
to the final deliverable (nothing downstream should change) and an edit to
an intermediate criteria artifact (exactly the downstream chain should
change). Three conditions process each edit: two single-call regeneration
loops over the full material bundle, and dependency-scoped replay.
"""

from dagline.evaluation.corpus import Fragment, build_corpus
from dagline.evaluation.loops import (
    FINAL_UPDATE,
    WITH_EDIT_EVENT,
    LoopState,
    loop_state_for,
    loop_update,
    loop_update_result,
)
from dagline.evaluation.metrics import METRIC_FIELDS, MetricsReport, MetricsRow, compute_metrics
from dagline.evaluation.scenarios import (
    INTERMEDIATE_ARTIFACT_EDIT,
    UNRELATED_BRANCH_NOOP_UPDATE,
    Scenario,
    build_scenario,
)
from dagline.evaluation.experiment import (
    CONDITIONS,
    DAG_REPLAY,
    LOOP_FINAL_UPDATE,
    LOOP_WITH_EDIT_EVENT,
    ExperimentReport,
    run_condition,
    run_experiment,
)

__all__ = [
    "CONDITIONS",
    "DAG_REPLAY",
    "FINAL_UPDATE",
    "Fragment",
    "INTERMEDIATE_ARTIFACT_EDIT",
    "LOOP_FINAL_UPDATE",
    "LOOP_WITH_EDIT_EVENT",
    "LoopState",
    "METRIC_FIELDS",
    "MetricsReport",
    "MetricsRow",
    "Scenario",
    "UNRELATED_BRANCH_NOOP_UPDATE",
    "WITH_EDIT_EVENT",
    "build_corpus",
    "build_scenario",
    "compute_metrics",
    "loop_state_for",
    "loop_update",
    "loop_update_result",
    "run_condition",
    "run_experiment",
]
