"""Scenario construction, loop baselines, metrics, and the experiment driver."""

from __future__ import annotations

import pytest

from dagline.errors import DaglineError
from dagline.evaluation import (
    CONDITIONS,
    DAG_REPLAY,
    FINAL_UPDATE,
    INTERMEDIATE_ARTIFACT_EDIT,
    LOOP_FINAL_UPDATE,
    LOOP_WITH_EDIT_EVENT,
    UNRELATED_BRANCH_NOOP_UPDATE,
    WITH_EDIT_EVENT,
    build_corpus,
    build_scenario,
    compute_metrics,
    loop_state_for,
    loop_update,
    run_condition,
    run_experiment,
)
from dagline.evaluation.scenarios import CONSTRAINT_MARKER
from dagline.graph import ancestors, descendants
from dagline.runtime import apply_edit
from dagline.store import ExecutionStats

# Keep unit-test scenarios cheap; the stand-in cost knob only affects timing.
WP = 4


def unrelated(seed=0):
    return build_scenario(UNRELATED_BRANCH_NOOP_UPDATE, seed, work_passes=WP)


def intermediate(seed=0):
    return build_scenario(INTERMEDIATE_ARTIFACT_EDIT, seed, work_passes=WP)


class TestCorpus:
    def test_same_seed_identical_bytes(self):
        a = build_corpus(7, include_recruiting=True)
        b = build_corpus(7, include_recruiting=True)
        assert {k: f.text for k, f in a.items()} == {k: f.text for k, f in b.items()}

    def test_markers_unique_and_planted(self):
        corpus = build_corpus(3, include_recruiting=True)
        all_markers = [m for f in corpus.values() for m in f.markers]
        assert len(all_markers) == len(set(all_markers))
        for fragment in corpus.values():
            for marker in fragment.markers:
                assert marker.encode() in fragment.text
            others = set(all_markers) - set(fragment.markers)
            assert not any(m.encode() in fragment.text for m in others)


class TestScenarios:
    def test_recruiting_branch_not_upstream_of_final(self):
        scenario = unrelated()
        upstream = ancestors(scenario.workspace.graph, scenario.final_node)
        assert not upstream & {"recruit_src_a", "recruit_src_b", "recruiting_summary"}
        assert "recruiting_summary" in scenario.workspace.graph.nodes

    def test_intermediate_propagation_set(self):
        scenario = intermediate()
        assert scenario.propagation_set == {"implementation_plan", "final_memo"}

    def test_label_sets_structural(self):
        for scenario in (unrelated(), intermediate()):
            graph = scenario.workspace.graph
            assert scenario.propagation_set == descendants(graph, {scenario.edit.node_id})
            assert not scenario.stable_set & scenario.propagation_set
            assert scenario.final_node in graph.nodes

    def test_same_seed_identical_scenario(self):
        a, b = unrelated(5), unrelated(5)
        assert a.pre_state == b.pre_state
        assert a.edit.new_content == b.edit.new_content

    def test_baseline_final_memo_free_of_recruiting_markers(self):
        scenario = unrelated()
        assert not any(
            m.encode() in scenario.prior_final for m in scenario.contamination_markers
        )

    def test_unknown_task_rejected(self):
        with pytest.raises(DaglineError):
            build_scenario("nonesuch", 0)


class TestLoopBaselines:
    def test_output_differs_and_contaminates_on_unrelated(self):
        scenario = unrelated()
        edited, _ = apply_edit(scenario.workspace, scenario.edit)
        state = loop_state_for(scenario, edited)
        for condition in (FINAL_UPDATE, WITH_EDIT_EVENT):
            output = loop_update(state, condition, work_passes=WP)
            assert output != scenario.prior_final
            assert any(m.encode() in output for m in scenario.contamination_markers)

    def test_bundle_reflects_post_edit_sources(self):
        scenario = unrelated()
        edited, _ = apply_edit(scenario.workspace, scenario.edit)
        state = loop_state_for(scenario, edited)
        bundle = dict(state.source_bundle)
        assert bundle["recruit_src_a:raw"] == scenario.edit.new_content

    def test_constraint_reaches_loop_output_on_intermediate(self):
        scenario = intermediate()
        edited, _ = apply_edit(scenario.workspace, scenario.edit)
        state = loop_state_for(scenario, edited)
        for condition in (FINAL_UPDATE, WITH_EDIT_EVENT):
            output = loop_update(state, condition, work_passes=WP)
            assert CONSTRAINT_MARKER.encode() in output

    def test_edit_event_port_only_in_aware_condition(self):
        scenario = intermediate()
        edited, _ = apply_edit(scenario.workspace, scenario.edit)
        state = loop_state_for(scenario, edited)
        plain = loop_update(state, FINAL_UPDATE, work_passes=WP)
        aware = loop_update(state, WITH_EDIT_EVENT, work_passes=WP)
        assert b"port: edit_event" in aware
        assert b"port: edit_event" not in plain


class TestComputeMetrics:
    def test_noop_update_scores_perfect_preservation(self):
        scenario = unrelated()
        row = compute_metrics(
            scenario, scenario.pre_state, dict(scenario.pre_state), ExecutionStats()
        )
        assert row.final_output_exact_match == 1.0
        assert row.final_output_hash_preserved == 1.0
        assert row.stable_artifact_hash_preservation == 1.0
        assert row.unnecessary_churn_rate == 0.0
        assert row.upstream_churn_rate == 0.0
        assert row.unrelated_branch_contamination_rate == 0.0

    def test_missing_node_rejected(self):
        scenario = unrelated()
        post = dict(scenario.pre_state)
        post.pop(scenario.final_node)
        with pytest.raises(DaglineError):
            compute_metrics(scenario, scenario.pre_state, post, ExecutionStats())

    def test_rates_validated(self):
        from dagline.evaluation.metrics import MetricsRow

        with pytest.raises(DaglineError):
            MetricsRow(**{f: 0.0 for f in (
                "final_output_hash_preserved", "stable_artifact_hash_preservation",
                "unnecessary_churn_rate", "unrelated_branch_contamination_rate",
                "final_memo_constraint_reflection", "cross_artifact_consistency_score",
                "downstream_propagation_recall", "upstream_churn_rate",
                "unaffected_artifact_preservation", "input_chars", "output_chars",
                "synthesis_calls", "elapsed",
            )}, final_output_exact_match=1.5)


class TestReplayPropertiesOver100Seeds:
    def test_unrelated_task_dag_perfect_isolation(self):
        for seed in range(100):
            row = run_condition(UNRELATED_BRANCH_NOOP_UPDATE, DAG_REPLAY, seed, work_passes=WP)
            assert row.final_output_exact_match == 1.0
            assert row.unnecessary_churn_rate == 0.0
            assert row.unrelated_branch_contamination_rate == 0.0

    def test_unrelated_task_loops_always_rewrite(self):
        for seed in range(100):
            for condition in (LOOP_FINAL_UPDATE, LOOP_WITH_EDIT_EVENT):
                row = run_condition(UNRELATED_BRANCH_NOOP_UPDATE, condition, seed, work_passes=WP)
                assert row.final_output_exact_match == 0.0
                assert row.unrelated_branch_contamination_rate == 1.0

    def test_intermediate_task_dag_propagation(self):
        for seed in range(100):
            row = run_condition(INTERMEDIATE_ARTIFACT_EDIT, DAG_REPLAY, seed, work_passes=WP)
            assert row.downstream_propagation_recall == 1.0
            assert row.upstream_churn_rate == 0.0
            assert row.stable_artifact_hash_preservation == 1.0
            assert row.cross_artifact_consistency_score == 1.0


class TestScenarioReplayDecisions:
    def test_unrelated_edit_replays_memo_recomputes_branch(self):
        scenario = unrelated()
        edited, _ = apply_edit(scenario.workspace, scenario.edit)
        from dagline.runtime import run

        report = run(edited, "replay")
        assert report.decision_for("final_memo").action == "replayed"
        assert report.decision_for("recruit_src_a").action == "recomputed"
        assert report.decision_for("recruiting_summary").action == "recomputed"
        assert report.decision_for("recruit_src_b").action == "replayed"

    def test_criteria_pin_recomputes_downstream_replays_evidence(self):
        scenario = intermediate()
        edited, dirty = apply_edit(scenario.workspace, scenario.edit)
        assert dirty == {"implementation_plan", "final_memo"}
        from dagline.runtime import run

        report = run(edited, "replay")
        assert report.decision_for("recommendation_criteria").action == "pinned"
        assert report.decision_for("implementation_plan").action == "recomputed"
        assert report.decision_for("final_memo").action == "recomputed"
        for upstream in ("src_utilization", "claim_matrix", "tension_analysis"):
            assert report.decision_for(upstream).action == "replayed"


class TestExperimentDriver:
    def test_repeats_identical_and_means_stable(self):
        one = run_experiment(UNRELATED_BRANCH_NOOP_UPDATE, 1, work_passes=WP)
        three = run_experiment(UNRELATED_BRANCH_NOOP_UPDATE, 3, work_passes=WP)
        assert three.all_repeats_identical()
        for condition in CONDITIONS:
            a = one.condition(condition).mean
            b = three.condition(condition).mean
            for field in ("final_output_exact_match", "unnecessary_churn_rate",
                          "unrelated_branch_contamination_rate", "input_chars",
                          "synthesis_calls"):
                assert getattr(a, field) == getattr(b, field)

    def test_table_and_csv_shapes(self):
        report = run_experiment(INTERMEDIATE_ARTIFACT_EDIT, 2, work_passes=WP)
        table = report.render_table()
        assert "variance 0" in table
        assert "proxy" in table
        for condition in CONDITIONS:
            assert condition in table
        csv = report.to_csv()
        lines = csv.strip().splitlines()
        assert len(lines) == 1 + 2 * len(CONDITIONS)
        assert lines[0].startswith("task,condition,repeat,final_output_exact_match")

    def test_bad_arguments(self):
        with pytest.raises(DaglineError):
            run_experiment("nonesuch", 1)
        with pytest.raises(DaglineError):
            run_experiment(UNRELATED_BRANCH_NOOP_UPDATE, 0)
        with pytest.raises(DaglineError):
            run_condition(UNRELATED_BRANCH_NOOP_UPDATE, "nonesuch")
