"""Controller core: score, gate, execute, react, decay.

One transition does, in order: extract deficit features from the last
workspace summary, compute the admissible symbol set, select the argmax
symbol (ties break toward the smaller alphabet index), gate it if
expansive, execute it, re-summarize the workspace from disk, diff the
tracked public files, update the forced queue (trigger injections
prepend, static follow-ups append, drop the consumed head), decay and
push obligations, append to the recency history, take the mode edge, and
decrement the budget.

Selection priority is strict: a nonempty forced queue wins over
everything; otherwise a low budget (or Tail mode) forces the next tail
symbol; otherwise the mode's phase filter applies, with Generate symbols
leaking into Harden while code is scarce.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence

from .adjacency import AdjacencyVerdict, Judge, ProposalError, check_adjacency, load_proposal
from .alphabet import ALPHABET, Phase, PromptSymbol, follow_up, render_prompt, symbol
from .executor import ExecutionRequest, ExecutionResult, Executor
from .obligations import (
    AXES,
    DEFAULT_DECAY,
    ObligationVector,
    PushTable,
    _decay_and_push_unchecked,
    default_push_table,
    pressure,
)
from .trigger import (
    DEFAULT_TRACKED_PATTERNS,
    DiffReport,
    detect_public_diff,
    forced_injection,
    snapshot,
)
from .workspace import (
    FEATURE_NAMES,
    DeficitTargets,
    EvidenceSurface,
    FeatureVector,
    WorkspaceSummary,
    extract_features,
    prompt_substitutions,
    summarize_workspace,
)

__all__ = [
    "Mode",
    "GuardConfig",
    "WeightTable",
    "AblationSwitches",
    "ControllerState",
    "Controller",
    "ControlError",
    "DEFAULT_TAIL_SEQUENCE",
    "DEFAULT_WINDOW",
    "score",
    "admissible",
    "select",
    "mode_transition",
    "merge_forced",
]


class Mode(str, Enum):
    SEED = "seed"
    GENERATE = "generate"
    HARDEN = "harden"
    TAIL = "tail"
    HALT = "halt"


class ControlError(RuntimeError):
    pass


DEFAULT_WINDOW = 6

# Ends every run the same way: final grounding, audit, cleanup, critique
# cycle, rewrite, README check, one more grounding audit, polish.
DEFAULT_TAIL_SEQUENCE: tuple[str, ...] = (
    "FinalGroundingAudit",
    "SkepticalAudit",
    "ClaimCleanup",
    "Critique",
    "ResponseToCritique",
    "PaperRewrite",
    "READMEVerification",
    "FinalGroundingAudit",
    "AcademicPaperPolish",
)

_DEFAULT_WEIGHT_ROWS: dict[str, dict[str, float]] = {
    # Harden symbols: own surface deficit +1.0, matching obligation axis +2.0.
    "PaperStrengthening": {"paper_deficit": 1.0, "paper_sync": 2.0},
    "READMEVerification": {"readme_deficit": 1.0, "readme_sync": 2.0},
    "BenchmarkTightening": {"benchmark_deficit": 1.0, "bench": 2.0},
    "GroundingCreation": {"grounding_deficit": 1.0, "ground": 2.0},
    "SkepticalAudit": {"grounding_deficit": 1.0, "audit": 2.0},
    "PaperRewrite": {"paper_deficit": 1.0, "paper_sync": 2.0},
    "ClaimCleanup": {"paper_deficit": 1.0, "paper_sync": 2.0},
    "PortfolioExpansion": {"code_deficit": 1.0},
    "BenchmarkSearch": {"benchmark_deficit": 1.0, "bench": 2.0},
    # Generate symbols chase missing code.
    "SeedGeneration": {"code_deficit": 1.5},
    "SeedUpgrade": {"code_deficit": 1.5},
    # Seed and Tail symbols carry no weights: Seed selection alternates on
    # the recency penalty alone, Tail symbols arrive via the tail override.
}


@dataclass(frozen=True)
class GuardConfig:
    min_repos: int = 1
    loc_low_threshold: float = 0.7


@dataclass(frozen=True)
class WeightTable:
    rows: Mapping[str, Mapping[str, float]]
    biases: Mapping[str, float]
    rho: float = 0.5

    def __post_init__(self) -> None:
        ids = {s.id for s in ALPHABET}
        if set(self.rows) != ids:
            missing = sorted(ids - set(self.rows))
            extra = sorted(set(self.rows) - ids)
            raise ValueError(f"weight rows mismatch: missing {missing}, extra {extra}")
        if set(self.biases) != ids:
            raise ValueError("bias table must cover exactly the 17 symbols")
        for sid, row in self.rows.items():
            for name in row:
                if name not in FEATURE_NAMES:
                    raise ValueError(f"row {sid}: unknown feature {name!r}")
        if self.rho < 0.0:
            raise ValueError("recency penalty must be >= 0")

    @classmethod
    def default(cls) -> "WeightTable":
        rows = {s.id: dict(_DEFAULT_WEIGHT_ROWS.get(s.id, {})) for s in ALPHABET}
        biases = {s.id: 0.0 for s in ALPHABET}
        return cls(rows=rows, biases=biases, rho=0.5)


@dataclass(frozen=True)
class AblationSwitches:
    """Simulation switches; everything on (False) in normal runs."""

    adjacency_off: bool = False
    ledger_off: bool = False
    paper_first_off: bool = False
    decay_off: bool = False
    trigger_off: bool = False
    benchmark_judge_off: bool = False

    def as_dict(self) -> dict[str, bool]:
        return {
            "adjacency_off": self.adjacency_off,
            "ledger_off": self.ledger_off,
            "paper_first_off": self.paper_first_off,
            "decay_off": self.decay_off,
            "trigger_off": self.trigger_off,
            "benchmark_judge_off": self.benchmark_judge_off,
        }


@dataclass(frozen=True)
class ControllerState:
    workspace: WorkspaceSummary
    mode: Mode
    obligations: ObligationVector
    forced_queue: tuple[str, ...]
    history: tuple[str, ...]
    step: int
    budget_remaining: int
    tail_progress: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "workspace": self.workspace.to_dict(),
            "mode": self.mode.value,
            "obligations": self.obligations.as_dict(),
            "forced_queue": list(self.forced_queue),
            "history": list(self.history),
            "step": self.step,
            "budget_remaining": self.budget_remaining,
            "tail_progress": self.tail_progress,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ControllerState":
        return cls(
            workspace=WorkspaceSummary.from_dict(d["workspace"]),
            mode=Mode(d["mode"]),
            obligations=ObligationVector(**{k: d["obligations"][k] for k in AXES}),
            forced_queue=tuple(d["forced_queue"]),
            history=tuple(d["history"]),
            step=int(d["step"]),
            budget_remaining=int(d["budget_remaining"]),
            tail_progress=int(d["tail_progress"]),
        )

    @classmethod
    def initial(cls, workspace: WorkspaceSummary, budget: int) -> "ControllerState":
        return cls(
            workspace=workspace,
            mode=Mode.SEED,
            obligations=ObligationVector(),
            forced_queue=(),
            history=(),
            step=0,
            budget_remaining=budget,
            tail_progress=0,
        )


def score(
    p: PromptSymbol | str,
    features: FeatureVector,
    history: Sequence[str],
    weights: WeightTable,
    window: int = DEFAULT_WINDOW,
) -> float:
    """Linear score minus recency: <w_p, feat> + b_p - rho * count / window."""
    sym = symbol(p) if isinstance(p, str) else p
    row = weights.rows[sym.id]
    total = 0.0
    # Fixed iteration order keeps float summation bit-stable for replay.
    for name in FEATURE_NAMES:
        w = row.get(name, 0.0)
        if w:
            total += w * features[name]
    total += weights.biases[sym.id]
    if weights.rho and window > 0:
        total -= weights.rho * (list(history).count(sym.id) / window)
    return total


_PHASE_FOR_MODE = {
    Mode.SEED: Phase.SEED,
    Mode.GENERATE: Phase.GENERATE,
    Mode.HARDEN: Phase.HARDEN,
}


def admissible(
    state: ControllerState,
    features: FeatureVector,
    guards: GuardConfig = GuardConfig(),
    tail_sequence: Sequence[str] = DEFAULT_TAIL_SEQUENCE,
    switches: AblationSwitches = AblationSwitches(),
) -> tuple[str, ...]:
    """Admissible symbol ids, ordered by alphabet index.

    Priority: forced queue head > tail override (low budget or Tail mode)
    > phase filter. In Harden mode a code-starved workspace additionally
    admits the Generate symbols.
    """
    if state.mode is Mode.HALT:
        return ()
    if state.forced_queue:
        return (state.forced_queue[0],)
    if state.budget_remaining <= len(tail_sequence) or state.mode is Mode.TAIL:
        if state.tail_progress >= len(tail_sequence):
            return ()
        return (tail_sequence[state.tail_progress],)

    phase = _PHASE_FOR_MODE[state.mode]
    allowed = [s for s in ALPHABET if s.phase is phase]
    if state.mode is Mode.HARDEN and features["code_deficit"] > guards.loc_low_threshold:
        # Code is scarce: let the generation symbols compete for one step.
        allowed.extend(s for s in ALPHABET if s.phase is Phase.GENERATE)
    ids = [s.id for s in sorted(allowed, key=lambda s: s.alphabet_index)]
    if switches.adjacency_off:
        ids = [i for i in ids if i != "PortfolioExpansion"]
    if switches.benchmark_judge_off:
        ids = [i for i in ids if i != "BenchmarkSearch"]
    return tuple(ids)


def select(
    admissible_ids: Sequence[str],
    features: FeatureVector,
    history: Sequence[str],
    weights: WeightTable,
    window: int = DEFAULT_WINDOW,
) -> tuple[str, dict[str, float]]:
    """Argmax over the admissible set; returns all 17 scores for the trace."""
    if not admissible_ids:
        raise ControlError("admissible set is empty; nothing to select")
    scores = {
        s.id: score(s, features, history, weights, window) for s in ALPHABET
    }
    best = min(
        (symbol(sid) for sid in admissible_ids),
        key=lambda s: (-scores[s.id], s.alphabet_index),
    )
    return best.id, scores


def merge_forced(
    injected: Sequence[str], follow_ups: Sequence[str], rest: Sequence[str]
) -> tuple[str, ...]:
    """Trigger pair prepends, follow-ups append, duplicates collapse.

    When the injected pair and the follow-up list are identical only one
    copy survives; adjacent equal symbols in the concatenation collapse.
    """
    head = list(injected) if list(injected) == list(follow_ups) else [*injected, *follow_ups]
    merged: list[str] = []
    for sid in [*head, *rest]:
        if merged and merged[-1] == sid:
            continue
        merged.append(sid)
    return tuple(merged)


def mode_transition(
    mode: Mode,
    w: WorkspaceSummary,
    budget_remaining: int,
    guards: GuardConfig = GuardConfig(),
    tail_progress: int = 0,
    tail_length: int = len(DEFAULT_TAIL_SEQUENCE),
) -> Mode:
    if mode is Mode.HALT:
        return Mode.HALT
    if budget_remaining <= 0 or tail_progress >= tail_length:
        return Mode.HALT
    if mode is Mode.SEED:
        if w.theory.present and w.utility_present:
            return Mode.GENERATE
        return Mode.SEED
    if mode is Mode.GENERATE:
        ready = sum(
            1 for r in w.repos.repos if r.installable and r.has_readme
        )
        if ready >= guards.min_repos and w.public.paper_paths:
            return Mode.HARDEN
        return Mode.GENERATE
    if mode is Mode.HARDEN:
        if budget_remaining <= tail_length:
            return Mode.TAIL
        return Mode.HARDEN
    return Mode.TAIL


@dataclass
class Controller:
    """The transition engine; the orchestrator owns config, traces, git."""

    root: Path
    executor: Executor
    judge: Judge
    weights: WeightTable = field(default_factory=WeightTable.default)
    push_table: Optional[PushTable] = None
    targets: DeficitTargets = field(default_factory=DeficitTargets)
    guards: GuardConfig = field(default_factory=GuardConfig)
    tail_sequence: tuple[str, ...] = DEFAULT_TAIL_SEQUENCE
    tracked_patterns: tuple[str, ...] = DEFAULT_TRACKED_PATTERNS
    decay: float = DEFAULT_DECAY
    window: int = DEFAULT_WINDOW
    step_timeout: float = 600.0
    template_dir: Optional[Path] = None
    switches: AblationSwitches = field(default_factory=AblationSwitches)
    commit_hook: Optional[Callable[[int, str], None]] = None

    def __post_init__(self) -> None:
        self.root = Path(self.root)
        if self.push_table is None:
            self.push_table = default_push_table(
                s.id for s in ALPHABET if s.expansive
            )
        for sid in self.tail_sequence:
            if symbol(sid).expansive:
                raise ValueError(
                    f"tail sequence may not contain expansive symbol {sid}"
                )

    def summarize(self, step: int) -> WorkspaceSummary:
        summary = summarize_workspace(self.root, step)
        if self.switches.ledger_off:
            # Simulated world without audited-claim tracking.
            summary = replace(
                summary,
                evidence=EvidenceSurface(
                    benchmark_count=summary.evidence.benchmark_count,
                    ledger_path=None,
                    grounded_claim_ratio=0.0,
                    test_pass_ratio=summary.evidence.test_pass_ratio,
                ),
            )
        return summary

    def initial_state(self, budget: int) -> ControllerState:
        if budget < 0:
            raise ValueError("budget must be >= 0")
        state = ControllerState.initial(self.summarize(0), budget)
        if budget == 0:
            state = replace(state, mode=Mode.HALT)
        return state

    def _gate(self, step: int) -> AdjacencyVerdict:
        staged = self.root / "expansion.json"
        try:
            proposal = load_proposal(staged)
        except ProposalError as exc:
            verdict = AdjacencyVerdict.rejected(str(exc))
            proposal = None
        if proposal is not None:
            context = "\n".join(
                [
                    *(
                        (self.root / p).read_text(encoding="utf-8", errors="replace")
                        for p in self.root.glob("THEORY.md")
                        if p.is_file()
                    ),
                    (self.root / "UTILITY.md").read_text(
                        encoding="utf-8", errors="replace"
                    )
                    if (self.root / "UTILITY.md").is_file()
                    else "",
                ]
            )
            verdict = check_adjacency(proposal, self.root, self.judge, context)
        if staged.is_file():
            # Consume the proposal whether or not it passed; a stale one
            # must never green-light a later unrelated expansive step.
            archive = self.root / ".cesm" / "expansions" / f"step-{step}.json"
            archive.parent.mkdir(parents=True, exist_ok=True)
            staged.replace(archive)
        return verdict

    def transition(self, state: ControllerState) -> tuple[ControllerState, dict[str, Any]]:
        if state.mode is Mode.HALT:
            raise ControlError("cannot transition a halted controller")
        if state.budget_remaining <= 0:
            raise ControlError("budget exhausted")

        features = extract_features(state.workspace, state.obligations, self.targets)
        adm = admissible(
            state, features, self.guards, self.tail_sequence, self.switches
        )
        if not adm:
            raise ControlError("admissible set is empty before halt edge")
        selected, scores = select(adm, features, state.history, self.weights, self.window)
        sym = symbol(selected)
        from_forced = bool(state.forced_queue) and state.forced_queue[0] == selected
        from_tail = not from_forced and (
            state.mode is Mode.TAIL
            or state.budget_remaining <= len(self.tail_sequence)
        )

        verdict: Optional[AdjacencyVerdict] = None
        gate_rejected = False
        if sym.expansive and not self.switches.adjacency_off:
            verdict = self._gate(state.step)
            gate_rejected = not verdict.passed

        result: Optional[ExecutionResult] = None
        pre_snap = None
        if not gate_rejected:
            if not self.switches.trigger_off:
                pre_snap = snapshot(self.root, self.tracked_patterns)
            prompt = render_prompt(
                sym, prompt_substitutions(state.workspace), self.template_dir
            )
            result = self.executor.execute(
                ExecutionRequest(
                    symbol_id=selected,
                    prompt_text=prompt.text,
                    root=self.root,
                    step=state.step,
                    timeout=self.step_timeout,
                )
            )
            if self.commit_hook is not None:
                self.commit_hook(state.step, selected)

        new_summary = self.summarize(state.step + 1)

        if not gate_rejected and pre_snap is not None:
            post_snap = snapshot(self.root, self.tracked_patterns)
            report = detect_public_diff(pre_snap, post_snap)
        else:
            report = DiffReport.empty()

        injected = (
            forced_injection(report, selected)
            if not self.switches.trigger_off
            else ()
        )
        follow_ups = follow_up(sym) if not gate_rejected else ()
        rest = state.forced_queue[1:] if from_forced else state.forced_queue
        new_queue = merge_forced(injected, follow_ups, rest)

        push = self.push_table.push_for(selected) if not gate_rejected else ObligationVector()
        if report.paper_changed:
            push = push + self.push_table.paper_hook
        if report.readme_changed:
            push = push + self.push_table.readme_hook
        new_obligations = _decay_and_push_unchecked(state.obligations, push, self.decay)

        new_history = (*state.history, selected)[-self.window :]
        new_budget = state.budget_remaining - 1
        new_tail_progress = state.tail_progress + (1 if from_tail else 0)
        new_mode = mode_transition(
            state.mode,
            new_summary,
            new_budget,
            self.guards,
            new_tail_progress,
            len(self.tail_sequence),
        )

        new_state = ControllerState(
            workspace=new_summary,
            mode=new_mode,
            obligations=new_obligations,
            forced_queue=new_queue,
            history=new_history,
            step=state.step + 1,
            budget_remaining=new_budget,
            tail_progress=new_tail_progress,
        )

        record: dict[str, Any] = {
            "step": state.step,
            "pre": {
                "mode": state.mode.value,
                "budget_remaining": state.budget_remaining,
                "forced_queue": list(state.forced_queue),
                "history": list(state.history),
                "tail_progress": state.tail_progress,
                "obligations": state.obligations.as_dict(),
                "workspace_digest": state.workspace.digest(),
            },
            "features": features.as_dict(),
            "scores": scores,
            "admissible": list(adm),
            "selected": selected,
            "from_forced": from_forced,
            "from_tail": from_tail,
            "adjacency": verdict.to_dict() if verdict is not None else None,
            "outcome": "gate_rejected" if gate_rejected else result.outcome,
            "transcript": result.transcript_path if result is not None else None,
            "markers": list(result.markers) if result is not None else [],
            "diff": report.to_dict(),
            "injected": list(injected),
            "follow_ups": list(follow_ups),
            "post": {
                "mode": new_mode.value,
                "budget_remaining": new_budget,
                "forced_queue": list(new_queue),
                "tail_progress": new_tail_progress,
                "obligations": new_obligations.as_dict(),
                "pressure": pressure(new_obligations),
                "workspace_digest": new_summary.digest(),
            },
        }
        return new_state, record
