"""Command-line surface: exit codes, output shapes, state handling."""

from __future__ import annotations

import json

import pytest

from dagline.cli import main

MANIFEST = {
    "nodes": [
        {"id": "fetch", "executor": "passthrough",
         "inputs": [{"port": "raw", "type": "text", "source": "context"}],
         "output_type": "text"},
        {"id": "digest", "executor": "synthesis", "config": {"instructions": "condense"},
         "inputs": [{"port": "upstream", "type": "text", "source": "dependency"}],
         "output_type": "text"},
        {"id": "memo", "executor": "synthesis",
         "inputs": [{"port": "summary", "type": "text", "source": "dependency"}],
         "output_type": "text"},
    ],
    "edges": [["fetch", "digest", "upstream"], ["digest", "memo", "summary"]],
}


@pytest.fixture
def project(tmp_path):
    manifest = tmp_path / "wf.json"
    manifest.write_text(json.dumps(MANIFEST))
    ctx = tmp_path / "ctx" / "fetch"
    ctx.mkdir(parents=True)
    (ctx / "raw").write_bytes(b"origin text MARK:SRC:0001\n")
    return {
        "manifest": str(manifest),
        "ctx": str(tmp_path / "ctx"),
        "store": str(tmp_path / "store"),
        "tmp": tmp_path,
    }


def invoke(*argv) -> int:
    return main(list(argv))


def run_args(project, *extra):
    return ("run", project["manifest"], "--store", project["store"],
            "--context", project["ctx"], *extra)


class TestValidate:
    def test_valid_manifest_silent_success(self, project, capsys):
        assert invoke("validate", project["manifest"]) == 0
        assert capsys.readouterr().out == ""

    def test_cycle_reported_exit_one(self, tmp_path, capsys):
        doc = json.loads(json.dumps(MANIFEST))
        doc["edges"].append(["memo", "digest", "upstream"])
        # memo -> digest collides with fetch -> digest on the same port; use
        # a distinct port to isolate the cycle violation.
        doc["nodes"][1]["inputs"].append(
            {"port": "back", "type": "text", "source": "dependency"}
        )
        doc["edges"][-1] = ["memo", "digest", "back"]
        path = tmp_path / "cyclic.json"
        path.write_text(json.dumps(doc))
        assert invoke("validate", str(path)) == 1
        lines = capsys.readouterr().out.splitlines()
        assert sum(1 for l in lines if l.startswith("cycle:")) == 1

    def test_malformed_document_exit_two(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert invoke("validate", str(path)) == 2


class TestRun:
    def test_cold_then_replay(self, project, capsys):
        assert invoke(*run_args(project)) == 0
        cold = capsys.readouterr().out
        assert cold.count("recomputed") == 3
        assert "identity-miss:new" in cold
        assert invoke(*run_args(project)) == 0
        warm = capsys.readouterr().out
        assert warm.count("replayed") == 3
        assert "identity-hit" in warm

    def test_decision_table_stable_across_invocations(self, project, capsys):
        invoke(*run_args(project))
        capsys.readouterr()
        invoke(*run_args(project))
        first = capsys.readouterr().out
        invoke(*run_args(project))
        second = capsys.readouterr().out

        def table(text: str) -> list[str]:
            return [line for line in text.splitlines() if not line.startswith("report:")]

        assert table(first) == table(second)

    def test_full_mode_on_warm_store_keeps_object_count(self, project, capsys):
        from dagline.store import FileStore

        invoke(*run_args(project))
        capsys.readouterr()
        count = FileStore(project["store"]).artifact_count()
        assert invoke(*run_args(project, "--mode", "full")) == 0
        out = capsys.readouterr().out
        assert out.count("recomputed") == 3
        assert FileStore(project["store"]).artifact_count() == count

    def test_missing_store_flag(self, project, capsys, monkeypatch):
        monkeypatch.delenv("DAGLINE_STORE", raising=False)
        assert invoke("run", project["manifest"], "--context", project["ctx"]) == 1

    def test_store_from_environment(self, project, capsys, monkeypatch):
        monkeypatch.setenv("DAGLINE_STORE", project["store"])
        assert invoke("run", project["manifest"], "--context", project["ctx"]) == 0


class TestEdit:
    def test_context_edit_prints_dirty_and_next_run_recomputes(self, project, capsys):
        invoke(*run_args(project))
        capsys.readouterr()
        new_file = project["tmp"] / "new_raw.txt"
        new_file.write_bytes(b"revised MARK:SRC:0002\n")
        assert invoke("edit", project["manifest"], "--store", project["store"],
                      "--context-edit", f"fetch:raw:{new_file}") == 0
        out = capsys.readouterr().out
        assert [l.strip() for l in out.splitlines()[1:]] == ["digest", "fetch", "memo"]
        invoke(*run_args(project))
        rerun = capsys.readouterr().out
        assert rerun.count("recomputed") == 3

    def test_artifact_edit_dirty_excludes_target(self, project, capsys):
        invoke(*run_args(project))
        capsys.readouterr()
        pin = project["tmp"] / "pin.txt"
        pin.write_bytes(b"operator digest\n")
        assert invoke("edit", project["manifest"], "--store", project["store"],
                      "--artifact-edit", f"digest:{pin}") == 0
        out = capsys.readouterr().out
        assert [l.strip() for l in out.splitlines()[1:]] == ["memo"]
        invoke(*run_args(project))
        rerun = capsys.readouterr().out
        assert "pinned" in rerun
        assert rerun.count("recomputed") == 1

    def test_edit_on_sink_is_dirty_free(self, project, capsys):
        invoke(*run_args(project))
        capsys.readouterr()
        pin = project["tmp"] / "pin.txt"
        pin.write_bytes(b"hand-written memo\n")
        invoke("edit", project["manifest"], "--store", project["store"],
               "--artifact-edit", f"memo:{pin}")
        out = capsys.readouterr().out
        assert [l.strip() for l in out.splitlines()[1:]] == []

    def test_unknown_target_exit_one(self, project, capsys):
        invoke(*run_args(project))
        capsys.readouterr()
        ghost = project["tmp"] / "x.txt"
        ghost.write_bytes(b"x")
        assert invoke("edit", project["manifest"], "--store", project["store"],
                      "--context-edit", f"ghost:raw:{ghost}") == 1


class TestLineageExplainDiff:
    def test_lineage_tree_depth_three(self, project, capsys):
        invoke(*run_args(project))
        capsys.readouterr()
        assert invoke("lineage", "--store", project["store"], "--node", "memo") == 0
        out = capsys.readouterr().out
        lines = out.splitlines()
        assert lines[0].startswith("memo ")
        assert lines[1].strip().startswith("digest <-summary")
        assert lines[2].strip().startswith("fetch <-upstream")
        assert lines[3].strip().startswith("context:raw")

    def test_lineage_source_is_leaf_only(self, project, capsys):
        invoke(*run_args(project))
        capsys.readouterr()
        invoke("lineage", "--store", project["store"], "--node", "fetch")
        out = capsys.readouterr().out.splitlines()
        assert out[0].startswith("fetch ")
        assert len(out) == 2 and out[1].strip().startswith("context:raw")

    def test_lineage_marks_pinned_overrides(self, project, capsys):
        invoke(*run_args(project))
        capsys.readouterr()
        pin = project["tmp"] / "pin.txt"
        pin.write_bytes(b"operator digest\n")
        invoke("edit", project["manifest"], "--store", project["store"],
               "--artifact-edit", f"digest:{pin}")
        invoke(*run_args(project))
        capsys.readouterr()
        invoke("lineage", "--store", project["store"], "--node", "memo")
        out = capsys.readouterr().out
        assert "[pinned]" in out
        assert "digest" in out

    def test_explain_latest_run(self, project, capsys):
        invoke(*run_args(project))
        invoke(*run_args(project))
        capsys.readouterr()
        assert invoke("explain", "--store", project["store"], "--node", "digest") == 0
        out = capsys.readouterr().out
        assert "action: replayed" in out
        assert "reason: identity-hit" in out

    def test_diff_two_runs(self, project, capsys):
        from dagline.store import FileStore

        invoke(*run_args(project))
        capsys.readouterr()
        new_file = project["tmp"] / "new.txt"
        new_file.write_bytes(b"changed source\n")
        invoke("edit", project["manifest"], "--store", project["store"],
               "--context-edit", f"fetch:raw:{new_file}")
        invoke(*run_args(project))
        capsys.readouterr()
        run_a, run_b = FileStore(project["store"]).list_runs()
        assert invoke("diff", "--store", project["store"], run_a, run_b) == 0
        out = capsys.readouterr().out
        assert "3 of 3 artifacts changed" in out

    def test_unknown_run_or_node(self, project, capsys):
        invoke(*run_args(project))
        capsys.readouterr()
        assert invoke("explain", "--store", project["store"],
                      "--node", "digest", "--run", "nope") == 1
        assert invoke("lineage", "--store", project["store"], "--node", "ghost") == 1


class TestExperimentCommand:
    def test_writes_report_and_csv(self, tmp_path, capsys):
        out_dir = tmp_path / "results"
        assert invoke("experiment", "unrelated_branch_noop_update",
                      "--repeats", "1", "--out", str(out_dir)) == 0
        printed = capsys.readouterr().out
        assert "dag_replay" in printed
        report = (out_dir / "report.txt").read_text()
        assert "proxy" in report
        csv = (out_dir / "metrics.csv").read_text()
        assert csv.startswith("task,condition,repeat,")

    def test_unknown_task_usage_error(self, capsys):
        with pytest.raises(SystemExit) as err:
            invoke("experiment", "nonesuch")
        assert err.value.code == 2


class TestLocking:
    def test_second_process_locked_out(self, project, capsys):
        import fcntl

        invoke(*run_args(project))
        capsys.readouterr()
        holder = open(project["tmp"] / "store" / ".lock", "w")
        fcntl.flock(holder, fcntl.LOCK_EX | fcntl.LOCK_NB)
        try:
            assert invoke(*run_args(project)) == 1
            assert "in use" in capsys.readouterr().err
        finally:
            holder.close()
