"""Adjacency gate for expansive steps.

An expansive run may only fire if a staged proposal (expansion.json at the
workspace root) passes five rules. Three are mechanical path/pointer
checks; two (single conceptual step, concrete instance) go to a pluggable
judge. The gate fails closed: a missing or malformed proposal, or an
unavailable judge, rejects the step.

expansion.json schema, all five fields required:

    {
      "pivot": "...",                       judged: one conceptual step
      "concrete_instance": "...",           judged: concrete, not vague
      "preserved_capability": {"name": "...", "ref": "path"},
      "strengthened_evidence": "path",
      "claim_support": "claim id or benchmark path"
    }
"""
from __future__ import annotations

import json
import re
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Protocol

from .jsonio import read_json
from .ledger import Ledger, LedgerError

__all__ = [
    "RULE_NAMES",
    "ExpansionProposal",
    "ProposalError",
    "JudgeUnavailable",
    "JudgeResponse",
    "Judge",
    "HeuristicJudge",
    "CommandJudge",
    "RuleResult",
    "AdjacencyVerdict",
    "check_adjacency",
    "load_proposal",
]

RULE_NAMES: tuple[str, ...] = (
    "preserves_capability",
    "single_step",
    "concrete_instance",
    "strengthens_evidence",
    "claim_backed",
)


class ProposalError(ValueError):
    pass


@dataclass(frozen=True)
class ExpansionProposal:
    pivot: str
    concrete_instance: str
    capability_name: str
    capability_ref: str
    strengthened_evidence: str
    claim_support: str

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExpansionProposal":
        try:
            cap = d["preserved_capability"]
            return cls(
                pivot=str(d["pivot"]),
                concrete_instance=str(d["concrete_instance"]),
                capability_name=str(cap["name"]),
                capability_ref=str(cap["ref"]),
                strengthened_evidence=str(d["strengthened_evidence"]),
                claim_support=str(d["claim_support"]),
            )
        except (KeyError, TypeError) as exc:
            raise ProposalError(f"expansion proposal missing field: {exc}") from exc

    def to_dict(self) -> dict[str, Any]:
        return {
            "pivot": self.pivot,
            "concrete_instance": self.concrete_instance,
            "preserved_capability": {
                "name": self.capability_name,
                "ref": self.capability_ref,
            },
            "strengthened_evidence": self.strengthened_evidence,
            "claim_support": self.claim_support,
        }


def load_proposal(path: Path | str) -> ExpansionProposal:
    path = Path(path)
    if not path.is_file():
        raise ProposalError(f"no expansion proposal staged at {path.name}")
    try:
        data = read_json(path)
    except ValueError as exc:
        raise ProposalError(f"expansion proposal is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ProposalError("expansion proposal must be a JSON object")
    return ExpansionProposal.from_dict(data)


# --- judges ---------------------------------------------------------------

class JudgeUnavailable(RuntimeError):
    """The judge could not produce a verdict; the gate must fail closed."""


@dataclass(frozen=True)
class JudgeResponse:
    single_step: bool
    concrete_instance: bool
    rationale_single: str
    rationale_concrete: str


class Judge(Protocol):
    def judge(self, proposal: ExpansionProposal, context_text: str) -> JudgeResponse:
        ...


_WORD = re.compile(r"[a-z0-9]{4,}")
_VAGUE_TOKENS = ("tbd", "todo", "???", "placeholder", "etc.")


class HeuristicJudge:
    """Deterministic keyword judge; the default when no LM judge is wired.

    single_step: the pivot must share at least min_overlap content words
    with the workspace context (adjacent work talks about what already
    exists) and read as one move (at most max_sentences sentences).
    concrete_instance: at least min_words words and no vagueness tokens.
    """

    def __init__(
        self, min_overlap: int = 2, max_sentences: int = 3, min_words: int = 8
    ) -> None:
        self.min_overlap = min_overlap
        self.max_sentences = max_sentences
        self.min_words = min_words

    def judge(self, proposal: ExpansionProposal, context_text: str) -> JudgeResponse:
        pivot_words = set(_WORD.findall(proposal.pivot.lower()))
        context_words = set(_WORD.findall(context_text.lower()))
        overlap = pivot_words & context_words
        sentences = [s for s in re.split(r"[.!?]+", proposal.pivot) if s.strip()]
        single = len(overlap) >= self.min_overlap and len(sentences) <= self.max_sentences
        rationale_single = (
            f"{len(overlap)} shared context words, {len(sentences)} sentences"
        )

        inst = proposal.concrete_instance.strip()
        words = inst.split()
        vague = [tok for tok in _VAGUE_TOKENS if tok in inst.lower()]
        concrete = len(words) >= self.min_words and not vague
        rationale_concrete = (
            f"{len(words)} words" + (f", vague tokens {vague}" if vague else "")
        )
        return JudgeResponse(single, concrete, rationale_single, rationale_concrete)


class CommandJudge:
    """External judge process: JSON request on stdin, JSON verdict on stdout.

    Request: {"pivot", "concrete_instance", "context"}. Response must
    contain booleans "single_step" and "concrete_instance". Nonzero exit,
    timeout, or malformed output raises JudgeUnavailable.
    """

    def __init__(self, command: str, timeout: float = 10.0) -> None:
        self.command = command
        self.timeout = timeout

    def judge(self, proposal: ExpansionProposal, context_text: str) -> JudgeResponse:
        request = json.dumps(
            {
                "pivot": proposal.pivot,
                "concrete_instance": proposal.concrete_instance,
                "context": context_text,
            }
        )
        try:
            proc = subprocess.run(
                self.command,
                shell=True,
                input=request.encode(),
                capture_output=True,
                timeout=self.timeout,
            )
        except subprocess.TimeoutExpired as exc:
            raise JudgeUnavailable(f"judge timed out after {self.timeout}s") from exc
        except OSError as exc:
            raise JudgeUnavailable(f"judge could not start: {exc}") from exc
        if proc.returncode != 0:
            raise JudgeUnavailable(f"judge exited {proc.returncode}")
        try:
            data = json.loads(proc.stdout.decode())
            return JudgeResponse(
                single_step=bool(data["single_step"]),
                concrete_instance=bool(data["concrete_instance"]),
                rationale_single=str(data.get("rationale_single", "")),
                rationale_concrete=str(data.get("rationale_concrete", "")),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise JudgeUnavailable(f"judge returned malformed verdict: {exc}") from exc


# --- the gate ---------------------------------------------------------------

@dataclass(frozen=True)
class RuleResult:
    rule: str
    passed: bool
    detail: str

    def to_dict(self) -> dict[str, Any]:
        return {"rule": self.rule, "passed": self.passed, "detail": self.detail}


@dataclass(frozen=True)
class AdjacencyVerdict:
    passed: bool
    rules: tuple[RuleResult, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "rules": [r.to_dict() for r in self.rules]}

    @classmethod
    def rejected(cls, detail: str) -> "AdjacencyVerdict":
        # A gate that can't even evaluate (no proposal, judge down) still
        # reports all five rules so the trace shape stays uniform.
        return cls(
            passed=False,
            rules=tuple(RuleResult(name, False, detail) for name in RULE_NAMES),
        )


def _claim_backed(root: Path, pointer: str) -> tuple[bool, str]:
    ledger_path = root / "grounding.json"
    if ledger_path.is_file():
        try:
            ledger = Ledger.load(ledger_path)
            ledger.claim(pointer)
            return True, f"claim {pointer!r} found in grounding ledger"
        except (LedgerError, KeyError):
            pass
    candidate = root / pointer
    if candidate.is_file() and any(
        part in ("benchmarks", "bench") for part in Path(pointer).parts
    ):
        return True, f"benchmark artifact {pointer!r} exists"
    return False, f"{pointer!r} resolves to no ledger claim or benchmark artifact"


def check_adjacency(
    proposal: ExpansionProposal,
    root: Path | str,
    judge: Judge,
    context_text: str,
) -> AdjacencyVerdict:
    """Evaluate all five rules; overall pass requires every rule to pass."""
    root = Path(root)
    results: list[RuleResult] = []

    cap_exists = (root / proposal.capability_ref).is_file()
    results.append(
        RuleResult(
            "preserves_capability",
            cap_exists,
            f"capability ref {proposal.capability_ref!r} "
            + ("exists" if cap_exists else "missing"),
        )
    )

    try:
        response: Optional[JudgeResponse] = judge.judge(proposal, context_text)
    except JudgeUnavailable as exc:
        response = None
        judge_detail = f"judge unavailable: {exc}"
    if response is None:
        results.append(RuleResult("single_step", False, judge_detail))
        results.append(RuleResult("concrete_instance", False, judge_detail))
    else:
        results.append(
            RuleResult("single_step", response.single_step, response.rationale_single)
        )
        results.append(
            RuleResult(
                "concrete_instance",
                response.concrete_instance,
                response.rationale_concrete,
            )
        )

    ev_exists = (root / proposal.strengthened_evidence).is_file()
    results.append(
        RuleResult(
            "strengthens_evidence",
            ev_exists,
            f"evidence artifact {proposal.strengthened_evidence!r} "
            + ("exists" if ev_exists else "missing"),
        )
    )

    backed, detail = _claim_backed(root, proposal.claim_support)
    results.append(RuleResult("claim_backed", backed, detail))

    return AdjacencyVerdict(
        passed=all(r.passed for r in results), rules=tuple(results)
    )
