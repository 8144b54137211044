"""The five-rule gate on expansive steps, and both judge implementations."""
from __future__ import annotations

import json

import pytest

from cesm.adjacency import (
    RULE_NAMES,
    AdjacencyVerdict,
    CommandJudge,
    ExpansionProposal,
    HeuristicJudge,
    JudgeResponse,
    JudgeUnavailable,
    ProposalError,
    check_adjacency,
    load_proposal,
)
from cesm.jsonio import write_canonical_json

CONTEXT = (
    "The controller maintains one repository per idea and a benchmark "
    "suite whose grounding ledger backs every public claim."
)

GOOD = {
    "pivot": "Extend the controller benchmark suite with a repository of latency cases.",
    "concrete_instance": (
        "Add benchmarks/latency.md with twelve timed cases measured on the "
        "existing harness and record the medians."
    ),
    "preserved_capability": {"name": "existing suite", "ref": "benchmarks/cases.md"},
    "strengthened_evidence": "benchmarks/cases.md",
    "claim_support": "benchmarks/cases.md",
}


@pytest.fixture
def ws(tmp_path):
    (tmp_path / "benchmarks").mkdir()
    (tmp_path / "benchmarks" / "cases.md").write_text("case one\n")
    return tmp_path


def proposal(**overrides) -> ExpansionProposal:
    return ExpansionProposal.from_dict({**GOOD, **overrides})


def passing_judge() -> JudgeResponse:
    return JudgeResponse(True, True, "ok", "ok")


class StubJudge:
    def __init__(self, response=None, error=None):
        self.response = response or passing_judge()
        self.error = error

    def judge(self, proposal, context_text):
        if self.error:
            raise self.error
        return self.response


def test_proposal_roundtrip():
    p = proposal()
    assert ExpansionProposal.from_dict(p.to_dict()) == p
    assert p.capability_ref == "benchmarks/cases.md"


@pytest.mark.parametrize(
    "missing", ["pivot", "concrete_instance", "preserved_capability", "claim_support"]
)
def test_proposal_requires_all_fields(missing):
    raw = {k: v for k, v in GOOD.items() if k != missing}
    with pytest.raises(ProposalError):
        ExpansionProposal.from_dict(raw)


def test_load_proposal_errors(tmp_path):
    with pytest.raises(ProposalError, match="no expansion proposal"):
        load_proposal(tmp_path / "expansion.json")
    bad = tmp_path / "expansion.json"
    bad.write_text("{not json")
    with pytest.raises(ProposalError, match="not valid JSON"):
        load_proposal(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ProposalError, match="JSON object"):
        load_proposal(bad)
    write_canonical_json(bad, GOOD)
    assert load_proposal(bad) == proposal()


def test_all_rules_pass_on_good_proposal(ws):
    verdict = check_adjacency(proposal(), ws, StubJudge(), CONTEXT)
    assert verdict.passed
    assert tuple(r.rule for r in verdict.rules) == RULE_NAMES
    assert all(r.passed for r in verdict.rules)


def test_missing_capability_ref_fails_one_rule(ws):
    p = proposal(preserved_capability={"name": "x", "ref": "nowhere.md"})
    verdict = check_adjacency(p, ws, StubJudge(), CONTEXT)
    assert not verdict.passed
    failed = {r.rule for r in verdict.rules if not r.passed}
    assert failed == {"preserves_capability"}


def test_missing_evidence_artifact_fails(ws):
    p = proposal(strengthened_evidence="benchmarks/none.md")
    verdict = check_adjacency(p, ws, StubJudge(), CONTEXT)
    assert {r.rule for r in verdict.rules if not r.passed} == {"strengthens_evidence"}


def test_claim_backed_by_ledger_id(ws):
    write_canonical_json(
        ws / "grounding.json",
        {
            "claims": [
                {
                    "id": "c-lat",
                    "text": "latency is 12ms",
                    "source_file": "README.md",
                    "line_start": 1,
                    "line_end": 1,
                    "command": "true",
                    "expected_digest": "d" * 64,
                    "status": "grounded",
                }
            ]
        },
    )
    p = proposal(claim_support="c-lat")
    verdict = check_adjacency(p, ws, StubJudge(), CONTEXT)
    assert verdict.passed
    rule = {r.rule: r for r in verdict.rules}["claim_backed"]
    assert "ledger" in rule.detail


def test_claim_backed_by_benchmark_path_needs_benchmark_dir(ws):
    # a real file outside benchmarks/ or bench/ does not count
    (ws / "notes.md").write_text("notes\n")
    p = proposal(claim_support="notes.md")
    verdict = check_adjacency(p, ws, StubJudge(), CONTEXT)
    assert {r.rule for r in verdict.rules if not r.passed} == {"claim_backed"}
    p = proposal(claim_support="benchmarks/missing.md")
    verdict = check_adjacency(p, ws, StubJudge(), CONTEXT)
    assert not verdict.passed


def test_judge_failure_fails_closed(ws):
    judge = StubJudge(error=JudgeUnavailable("no judge"))
    verdict = check_adjacency(proposal(), ws, judge, CONTEXT)
    assert not verdict.passed
    by_rule = {r.rule: r for r in verdict.rules}
    assert not by_rule["single_step"].passed
    assert not by_rule["concrete_instance"].passed
    assert "judge unavailable" in by_rule["single_step"].detail
    # mechanical rules still report their own result
    assert by_rule["preserves_capability"].passed


def test_rejected_verdict_reports_all_rules():
    verdict = AdjacencyVerdict.rejected("no proposal staged")
    assert not verdict.passed
    assert tuple(r.rule for r in verdict.rules) == RULE_NAMES
    assert all(r.detail == "no proposal staged" for r in verdict.rules)


# ------------------------------------------------------- HeuristicJudge


def test_heuristic_accepts_adjacent_concrete_proposal():
    got = HeuristicJudge().judge(proposal(), CONTEXT)
    assert got.single_step and got.concrete_instance


def test_heuristic_rejects_unrelated_pivot():
    p = proposal(pivot="Launch a totally unrelated mobile game studio.")
    got = HeuristicJudge().judge(p, CONTEXT)
    assert not got.single_step


def test_heuristic_rejects_multi_sentence_pivot():
    p = proposal(
        pivot=(
            "Extend the controller benchmark suite. Then rewrite the grounding "
            "ledger. Then fork the repository twice. Then merge everything."
        )
    )
    got = HeuristicJudge().judge(p, CONTEXT)
    assert not got.single_step
    assert "4 sentences" in got.rationale_single


@pytest.mark.parametrize(
    "instance",
    [
        "too short",
        "We will add benchmarks later, details TBD for the new measurement suite.",
        "Add a placeholder benchmark file with a number in it somewhere soon.",
    ],
)
def test_heuristic_rejects_vague_instances(instance):
    got = HeuristicJudge().judge(proposal(concrete_instance=instance), CONTEXT)
    assert not got.concrete_instance


def test_heuristic_boundaries():
    judge = HeuristicJudge()
    # exactly eight words is concrete enough
    inst = "one two three four five six seven eight"
    assert judge.judge(proposal(concrete_instance=inst), CONTEXT).concrete_instance
    # exactly two shared words (controller, benchmark) and one sentence
    p = proposal(pivot="Tighten the controller benchmark wiring.")
    assert judge.judge(p, CONTEXT).single_step
    p = proposal(pivot="Tighten the controller wiring.")
    assert not judge.judge(p, CONTEXT).single_step


# --------------------------------------------------------- CommandJudge


def test_command_judge_roundtrip():
    cmd = (
        "python3 -c \"import json,sys; req=json.load(sys.stdin); "
        "print(json.dumps({'single_step': 'benchmark' in req['pivot'], "
        "'concrete_instance': True, 'rationale_single': 'kw', "
        "'rationale_concrete': 'ok'}))\""
    )
    got = CommandJudge(cmd).judge(proposal(), CONTEXT)
    assert got.single_step and got.concrete_instance
    assert got.rationale_single == "kw"


def test_command_judge_failures():
    with pytest.raises(JudgeUnavailable, match="exited"):
        CommandJudge("exit 3").judge(proposal(), CONTEXT)
    with pytest.raises(JudgeUnavailable, match="malformed"):
        CommandJudge("echo not-json").judge(proposal(), CONTEXT)
    with pytest.raises(JudgeUnavailable, match="malformed"):
        CommandJudge("echo '{}'").judge(proposal(), CONTEXT)
    with pytest.raises(JudgeUnavailable, match="timed out"):
        CommandJudge("sleep 5", timeout=0.2).judge(proposal(), CONTEXT)
