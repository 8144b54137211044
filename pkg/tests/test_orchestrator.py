"""Run/resume/replay against the frozen golden trace.

trace-golden.json was frozen only after the controller and the
independent step simulator in reference_sim.py agreed on every field of
every record (tools/make_golden.py); these tests hold the controller to
those bytes.
"""
from __future__ import annotations

import json

import pytest

from conftest import scenario_config
from cesm.jsonio import canonical_dumps, write_canonical_json
from cesm.orchestrator import (
    ResumeError,
    checkpoint_path,
    load_trace,
    prepare_workspace,
    prop1_violations,
    replay,
    resume,
    run,
    trace_path,
)


@pytest.fixture
def golden_cfg(tmp_path):
    return scenario_config(tmp_path / "ws", "golden")


def subprocess_git_log(root):
    import subprocess

    proc = subprocess.run(
        ["git", "-C", str(root), "log", "--format=%s"],
        capture_output=True,
        text=True,
        check=True,
    )
    return proc.stdout.strip().splitlines()


# ------------------------------------------------------------------ run


def test_budget_zero_run_executes_nothing(tmp_path):
    cfg = scenario_config(tmp_path / "ws", "golden", budget=0)
    result = run(cfg)
    assert result.trace == []
    assert result.steps_executed == 0
    assert result.final_state.mode.value == "halt"
    assert result.ok
    # the initial checkpoint still exists so resume is well defined
    assert checkpoint_path(cfg.root, 0).is_file()


def test_golden_run_reproduces_frozen_trace(golden_cfg, golden):
    result = run(golden_cfg)
    on_disk = load_trace(trace_path(golden_cfg.root))
    assert canonical_dumps(on_disk) == canonical_dumps(golden["trace"])
    assert canonical_dumps(json.loads(canonical_dumps(result.trace))) == canonical_dumps(
        golden["trace"]
    )
    assert result.final_state.to_dict() == golden["final_state"]
    assert result.violations == golden["violations"] == []


def test_golden_trace_shape(golden):
    trace = golden["trace"]
    assert len(trace) == 40
    assert [r["step"] for r in trace] == list(range(40))
    first = trace[0]
    for key in (
        "step",
        "pre",
        "features",
        "scores",
        "admissible",
        "selected",
        "from_forced",
        "from_tail",
        "adjacency",
        "outcome",
        "transcript",
        "markers",
        "diff",
        "injected",
        "follow_ups",
        "post",
    ):
        assert key in first, key
    assert len(first["scores"]) == 17
    # the run opens seed/generate and ends exactly on the nine-step tail
    assert [r["selected"] for r in trace[:3]] == [
        "Ideation",
        "TheoryCreation",
        "SeedGeneration",
    ]
    assert [r["selected"] for r in trace[-9:]] == [
        "FinalGroundingAudit",
        "SkepticalAudit",
        "ClaimCleanup",
        "Critique",
        "ResponseToCritique",
        "PaperRewrite",
        "READMEVerification",
        "FinalGroundingAudit",
        "AcademicPaperPolish",
    ]
    assert all(r["from_tail"] for r in trace[-9:])
    assert golden["final_state"]["mode"] == "halt"
    assert golden["final_state"]["budget_remaining"] == 0


def test_run_summary(golden_cfg):
    result = run(golden_cfg)
    s = result.summary()
    assert s["steps"] == 40
    assert s["final_mode"] == "halt"
    assert s["violations"] == 0
    assert s["max_pressure"] > 0


def test_run_commits_each_step(tmp_path):
    cfg = scenario_config(tmp_path / "ws", "golden")
    result = run(cfg, max_transitions=3)
    assert result.steps_executed == 3
    log = subprocess_git_log(cfg.root)
    assert log[0] == "step=2 symbol=SeedGeneration"
    assert log[-1] == "workspace init"
    assert len(log) == 4


def test_run_should_stop_polls_between_steps(tmp_path):
    cfg = scenario_config(tmp_path / "ws", "golden")
    calls = iter([False, False, True])
    result = run(cfg, should_stop=lambda: next(calls))
    assert result.steps_executed == 2


def test_prepare_workspace_idempotent(tmp_path):
    ws = tmp_path / "ws"
    prepare_workspace(ws)
    first = (ws / ".gitignore").read_text()
    prepare_workspace(ws)
    assert (ws / ".gitignore").read_text() == first
    assert first.count(".cesm/") == 1


# --------------------------------------------------------------- resume


def test_resume_continues_to_identical_trace(tmp_path, golden):
    full_cfg = scenario_config(tmp_path / "full", "golden")
    run(full_cfg)
    want = trace_path(full_cfg.root).read_bytes()

    part_cfg = scenario_config(tmp_path / "part", "golden")
    partial = run(part_cfg, max_transitions=17)
    assert partial.steps_executed == 17
    final = resume(part_cfg, checkpoint_path(part_cfg.root, 17))
    assert final.steps_executed == 40
    assert trace_path(part_cfg.root).read_bytes() == want
    assert canonical_dumps(json.loads(canonical_dumps(final.trace))) == canonical_dumps(
        golden["trace"]
    )


def test_resume_refuses_policy_mismatch(tmp_path):
    cfg = scenario_config(tmp_path / "ws", "golden")
    run(cfg, max_transitions=2)
    edited = scenario_config(tmp_path / "ws", "golden", biases={"Critique": 9.0})
    with pytest.raises(ResumeError, match="policy hash"):
        resume(edited, checkpoint_path(cfg.root, 2))


def test_resume_completed_run_is_noop(golden_cfg):
    result = run(golden_cfg)
    final_step = result.final_state.step
    before = trace_path(golden_cfg.root).read_bytes()
    again = resume(golden_cfg, checkpoint_path(golden_cfg.root, final_step))
    assert again.steps_executed == 40
    assert trace_path(golden_cfg.root).read_bytes() == before


def test_resume_missing_or_corrupt_checkpoint(tmp_path):
    cfg = scenario_config(tmp_path / "ws", "golden")
    run(cfg, max_transitions=1)
    with pytest.raises(ResumeError, match="not found"):
        resume(cfg, checkpoint_path(cfg.root, 99))
    bad = cfg.root / ".cesm" / "checkpoints" / "step-1.json"
    bad.write_text("{torn")
    with pytest.raises(ResumeError, match="not valid JSON"):
        resume(cfg, bad)


def test_resume_requires_trace_at_least_checkpoint_length(tmp_path):
    cfg = scenario_config(tmp_path / "ws", "golden")
    run(cfg, max_transitions=5)
    trace = load_trace(trace_path(cfg.root))
    write_canonical_json(trace_path(cfg.root), trace[:3])
    with pytest.raises(ResumeError, match="3 records"):
        resume(cfg, checkpoint_path(cfg.root, 5))


def test_checkpoint_contents(tmp_path):
    cfg = scenario_config(tmp_path / "ws", "golden")
    result = run(cfg, max_transitions=4)
    data = json.loads(checkpoint_path(cfg.root, 4).read_text())
    assert data["schema"] == 1
    assert data["policy_hash"] == cfg.policy_hash()
    assert data["trace_length"] == 4
    assert data["state"] == result.final_state.to_dict()
    # every intermediate checkpoint exists
    for step in range(5):
        assert checkpoint_path(cfg.root, step).is_file()


# --------------------------------------------------------------- replay


def write_trace(tmp_path, records):
    path = tmp_path / "trace.json"
    write_canonical_json(path, records)
    return path


def test_replay_accepts_golden(tmp_path, golden):
    cfg = scenario_config(tmp_path / "ws", "golden")
    path = write_trace(tmp_path, golden["trace"])
    report = replay(path, cfg)
    assert not report.diverged
    assert report.checked == 40


def test_replay_empty_trace(tmp_path):
    cfg = scenario_config(tmp_path / "ws", "golden")
    report = replay(write_trace(tmp_path, []), cfg)
    assert report.checked == 0 and not report.diverged


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda r: r.__setitem__("selected", "Critique"), "selected"),
        (lambda r: r["scores"].__setitem__("PaperRewrite", 99.0), "scores.PaperRewrite"),
        (lambda r: r.__setitem__("admissible", ["Critique"]), "admissible"),
        (
            lambda r: r["post"].__setitem__("forced_queue", ["Critique"]),
            "post.forced_queue",
        ),
        (lambda r: r.__setitem__("follow_ups", ["GroundingCreation"]), "follow_ups"),
    ],
)
def test_replay_detects_tampering(tmp_path, golden, mutate, field):
    records = json.loads(json.dumps(golden["trace"]))
    mutate(records[7])
    cfg = scenario_config(tmp_path / "ws", "golden")
    report = replay(write_trace(tmp_path, records), cfg)
    assert report.diverged
    assert report.step == records[7]["step"]
    assert report.field_name == field
    assert report.checked == 7


def test_replay_under_wrong_weights_diverges(tmp_path, golden):
    # replaying the golden trace under different biases must not pass
    cfg = scenario_config(tmp_path / "ws", "golden", biases={"Critique": 5.0})
    report = replay(write_trace(tmp_path, golden["trace"]), cfg)
    assert report.diverged
    assert report.field_name.startswith("scores")


def test_load_trace_rejects_non_array(tmp_path):
    path = tmp_path / "t.json"
    path.write_text("{}")
    with pytest.raises(ValueError, match="JSON array"):
        load_trace(path)


# ---------------------------------------------------------------- prop1


def fake_record(step, selected, public_change):
    return {
        "step": step,
        "selected": selected,
        "diff": {"public_change": public_change},
    }


def test_prop1_compliant_sequence():
    trace = [
        fake_record(1, "PaperStrengthening", True),
        fake_record(2, "GroundingCreation", False),
        fake_record(3, "SkepticalAudit", False),
        fake_record(4, "PaperRewrite", False),
    ]
    assert prop1_violations(trace) == []


def test_prop1_flags_missing_pair():
    trace = [
        fake_record(1, "PaperStrengthening", True),
        fake_record(2, "PaperRewrite", False),
        fake_record(3, "SkepticalAudit", False),
    ]
    got = prop1_violations(trace)
    assert got == [
        {
            "step": 1,
            "expected_next": ["GroundingCreation", "SkepticalAudit"],
            "actual_next": ["PaperRewrite", "SkepticalAudit"],
        }
    ]


def test_prop1_suppressed_symbols_exempt():
    trace = [
        fake_record(1, "SkepticalAudit", True),
        fake_record(2, "PaperRewrite", False),
        fake_record(3, "Critique", False),
    ]
    assert prop1_violations(trace) == []


def test_prop1_tail_changes_vacuous():
    trace = [
        fake_record(1, "PaperRewrite", False),
        fake_record(2, "PaperStrengthening", True),
        fake_record(3, "Critique", False),
    ]
    assert prop1_violations(trace) == []


def test_prop1_on_golden(golden):
    assert prop1_violations(golden["trace"]) == []
