"""Run orchestration: the outer loop around the controller.

Owns everything the transition engine does not: workspace preparation
(git init, bookkeeping commits), the append-only run trace, a checkpoint
after every step, resume with a policy-hash guard, and selection replay.

Artifacts live under <workspace>/.cesm/ (gitignored):
  trace.json                 canonical-JSON array of step records
  checkpoints/step-<t>.json  full controller state after step t
  transcripts/step-<t>.log   executor transcript for step t
  expansions/step-<t>.json   consumed expansion proposals
"""
from __future__ import annotations

import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Optional

from .adjacency import CommandJudge, HeuristicJudge, Judge
from .alphabet import follow_up
from .config import RunConfig
from .controller import (
    AblationSwitches,
    Controller,
    ControllerState,
    Mode,
    merge_forced,
    select,
    admissible,
)
from .executor import MockExecutor, SubprocessExecutor
from .jsonio import read_json, write_canonical_json
from .trigger import SUPPRESSED_SYMBOLS
from .workspace import FeatureVector

__all__ = [
    "RunResult",
    "ReplayReport",
    "ResumeError",
    "prepare_workspace",
    "build_controller",
    "run",
    "resume",
    "replay",
    "prop1_violations",
    "load_trace",
    "trace_path",
    "checkpoint_path",
]

CESM_DIR = ".cesm"


class ResumeError(RuntimeError):
    pass


def trace_path(root: Path) -> Path:
    return root / CESM_DIR / "trace.json"


def checkpoint_path(root: Path, step: int) -> Path:
    return root / CESM_DIR / "checkpoints" / f"step-{step}.json"


def _git(root: Path, *args: str, check: bool = True) -> subprocess.CompletedProcess:
    proc = subprocess.run(
        ["git", "-C", str(root), *args], capture_output=True, text=True, timeout=60
    )
    if check and proc.returncode != 0:
        raise RuntimeError(
            f"git {' '.join(args)} failed: {proc.stderr.strip() or proc.stdout.strip()}"
        )
    return proc


def prepare_workspace(root: Path) -> None:
    """Make root a committable git tree with .cesm/ ignored."""
    root.mkdir(parents=True, exist_ok=True)
    (root / CESM_DIR).mkdir(exist_ok=True)
    if not (root / ".git").exists():
        _git(root, "init", "-q")
    # Bookkeeping commits need an identity; set one locally, never globally.
    _git(root, "config", "user.email", "runner@localhost", check=False)
    _git(root, "config", "user.name", "cesm runner", check=False)
    gitignore = root / ".gitignore"
    line = f"{CESM_DIR}/"
    existing = gitignore.read_text(encoding="utf-8") if gitignore.is_file() else ""
    if line not in existing.splitlines():
        gitignore.write_text(existing + ("" if existing.endswith("\n") or not existing else "\n") + line + "\n", encoding="utf-8")
    head = _git(root, "rev-parse", "HEAD", check=False)
    if head.returncode != 0:
        _git(root, "add", "-A")
        _git(root, "commit", "-qm", "workspace init", "--allow-empty")


def commit_step(root: Path, step: int, symbol_id: str) -> None:
    _git(root, "add", "-A")
    _git(
        root,
        "commit",
        "-qm",
        f"step={step} symbol={symbol_id}",
        "--allow-empty",
    )


def build_controller(
    cfg: RunConfig,
    switches: AblationSwitches = AblationSwitches(),
    script_overlay: Optional[dict[str, Any]] = None,
) -> Controller:
    """Assemble the transition engine from a validated config.

    script_overlay replaces the on-disk mock script (the ablation harness
    passes scenario dicts directly).
    """
    root = cfg.root
    if cfg.executor.mode == "mock":
        skip_tags = ("paper_skeleton",) if switches.paper_first_off else ()
        if script_overlay is not None:
            executor = MockExecutor(script_overlay, skip_tags=skip_tags)
        else:
            executor = MockExecutor.from_file(cfg.executor.script, skip_tags=skip_tags)
    else:
        executor = SubprocessExecutor(cfg.agent_command())

    judge: Judge
    if cfg.adjacency.judge == "command":
        judge = CommandJudge(cfg.adjacency.judge_cmd, timeout=cfg.adjacency.judge_timeout)
    else:
        judge = HeuristicJudge()

    return Controller(
        root=root,
        executor=executor,
        judge=judge,
        weights=cfg.weight_table(),
        push_table=cfg.push_table(),
        targets=cfg.deficit_targets(),
        guards=cfg.guard_config(),
        tail_sequence=tuple(cfg.tail.sequence),
        tracked_patterns=tuple(cfg.trigger.patterns),
        decay=1.0 if switches.decay_off else cfg.decay_value,
        window=cfg.scorer.history_window,
        step_timeout=cfg.executor.timeout,
        template_dir=Path(cfg.templates_dir) if cfg.templates_dir else None,
        switches=switches,
        commit_hook=lambda step, sid: commit_step(root, step, sid),
    )


@dataclass
class RunResult:
    trace: list[dict[str, Any]]
    final_state: ControllerState
    violations: list[dict[str, Any]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def steps_executed(self) -> int:
        return len(self.trace)

    def summary(self) -> dict[str, Any]:
        max_pressure = max(
            (rec["post"]["pressure"] for rec in self.trace), default=0.0
        )
        return {
            "steps": self.steps_executed,
            "final_mode": self.final_state.mode.value,
            "budget_remaining": self.final_state.budget_remaining,
            "max_pressure": max_pressure,
            "violations": len(self.violations),
        }


def prop1_violations(trace: Iterable[dict[str, Any]]) -> list[dict[str, Any]]:
    """Public changes that were not followed by the grounding-audit pair.

    A change on one of the last two steps has no successor steps to check
    and is vacuously compliant.
    """
    records = list(trace)
    violations: list[dict[str, Any]] = []
    for i, rec in enumerate(records):
        if not rec["diff"]["public_change"]:
            continue
        if rec["selected"] in SUPPRESSED_SYMBOLS:
            continue
        expected = ("GroundingCreation", "SkepticalAudit")
        actual = tuple(r["selected"] for r in records[i + 1 : i + 3])
        if len(actual) < 2:
            continue
        if actual != expected:
            violations.append(
                {
                    "step": rec["step"],
                    "expected_next": list(expected),
                    "actual_next": list(actual),
                }
            )
    return violations


def _write_checkpoint(root: Path, cfg: RunConfig, state: ControllerState, trace_len: int) -> None:
    write_canonical_json(
        checkpoint_path(root, state.step),
        {
            "schema": 1,
            "policy_hash": cfg.policy_hash(),
            "state": state.to_dict(),
            "trace_length": trace_len,
        },
    )


def load_trace(path: Path | str) -> list[dict[str, Any]]:
    data = read_json(Path(path))
    if not isinstance(data, list):
        raise ValueError(f"trace file {path} must hold a JSON array")
    return data


def run(
    cfg: RunConfig,
    switches: AblationSwitches = AblationSwitches(),
    max_transitions: Optional[int] = None,
    should_stop: Optional[Callable[[], bool]] = None,
    _resume_state: Optional[ControllerState] = None,
    _resume_trace: Optional[list[dict[str, Any]]] = None,
    script_overlay: Optional[dict[str, Any]] = None,
) -> RunResult:
    """Drive the controller until Halt, budget 0, or max_transitions.

    Writes the trace and a checkpoint after every step, so a killed
    process resumes from the last completed transition. should_stop is
    polled between steps; a True return ends the run cleanly (same
    contract as a kill: the last checkpoint stays valid).
    """
    root = cfg.root
    prepare_workspace(root)
    controller = build_controller(cfg, switches, script_overlay)

    if _resume_state is not None:
        state = _resume_state
        trace = list(_resume_trace or [])
    else:
        state = controller.initial_state(cfg.budget)
        trace = []
        _write_checkpoint(root, cfg, state, 0)

    executed = 0
    while state.mode is not Mode.HALT and state.budget_remaining > 0:
        if max_transitions is not None and executed >= max_transitions:
            break
        if should_stop is not None and should_stop():
            break
        state, record = controller.transition(state)
        trace.append(record)
        executed += 1
        write_canonical_json(trace_path(root), trace)
        _write_checkpoint(root, cfg, state, len(trace))

    return RunResult(
        trace=trace, final_state=state, violations=prop1_violations(trace)
    )


def resume(
    cfg: RunConfig,
    checkpoint: Path | str,
    switches: AblationSwitches = AblationSwitches(),
    should_stop: Optional[Callable[[], bool]] = None,
    script_overlay: Optional[dict[str, Any]] = None,
) -> RunResult:
    """Continue a run from a checkpoint written by run().

    Refuses when the config's policy hash differs from the checkpoint's
    (an edited weight table must not silently continue a trace). Resuming
    a completed run is a no-op success.
    """
    checkpoint = Path(checkpoint)
    try:
        data = read_json(checkpoint)
    except FileNotFoundError:
        raise ResumeError(f"checkpoint not found: {checkpoint}") from None
    except ValueError as exc:
        raise ResumeError(f"checkpoint is not valid JSON: {exc}") from exc

    saved_hash = data.get("policy_hash")
    current = cfg.policy_hash()
    if saved_hash != current:
        raise ResumeError(
            "policy hash mismatch: checkpoint was written under a different "
            f"config ({saved_hash} != {current}); refusing to resume"
        )
    state = ControllerState.from_dict(data["state"])
    trace_file = trace_path(cfg.root)
    trace = load_trace(trace_file) if trace_file.is_file() else []
    expected_len = int(data.get("trace_length", state.step))
    if len(trace) < expected_len:
        raise ResumeError(
            f"trace has {len(trace)} records but checkpoint expects {expected_len}"
        )
    trace = trace[:expected_len]

    if state.mode is Mode.HALT or state.budget_remaining <= 0:
        return RunResult(
            trace=trace, final_state=state, violations=prop1_violations(trace)
        )
    return run(
        cfg,
        switches=switches,
        should_stop=should_stop,
        _resume_state=state,
        _resume_trace=trace,
        script_overlay=script_overlay,
    )


@dataclass
class ReplayReport:
    checked: int
    diverged: bool = False
    step: Optional[int] = None
    field_name: Optional[str] = None
    expected: Any = None
    actual: Any = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "checked": self.checked,
            "diverged": self.diverged,
            "step": self.step,
            "field": self.field_name,
            "expected": self.expected,
            "actual": self.actual,
        }


def replay(trace_file: Path | str, cfg: RunConfig) -> ReplayReport:
    """Re-run selection (not execution) against a recorded trace.

    For each record: rebuild the pre-step state, recompute the admissible
    set, all 17 scores, the selected symbol, the follow-ups, and the
    merged forced queue, and compare against what the trace recorded.
    Stops at the first divergence. An empty trace is vacuously fine.
    """
    records = load_trace(trace_file)
    weights = cfg.weight_table()
    guards = cfg.guard_config()
    tail_sequence = tuple(cfg.tail.sequence)
    window = cfg.scorer.history_window

    for idx, rec in enumerate(records):
        pre = rec["pre"]
        features = FeatureVector.from_dict(rec["features"])
        # Only selection-relevant state is rebuilt; the workspace summary
        # is represented by its recorded features.
        state = _selection_state(pre, rec["step"])

        def diverge(field_name: str, expected: Any, actual: Any) -> ReplayReport:
            return ReplayReport(
                checked=idx,
                diverged=True,
                step=rec["step"],
                field_name=field_name,
                expected=expected,
                actual=actual,
            )

        adm = admissible(state, features, guards, tail_sequence)
        if list(adm) != list(rec["admissible"]):
            return diverge("admissible", rec["admissible"], list(adm))

        selected, scores = select(adm, features, tuple(pre["history"]), weights, window)
        for sid, recorded in rec["scores"].items():
            if scores.get(sid) != recorded:
                return diverge(f"scores.{sid}", recorded, scores.get(sid))
        if selected != rec["selected"]:
            return diverge("selected", rec["selected"], selected)

        expected_follow = (
            list(follow_up(selected)) if rec["outcome"] != "gate_rejected" else []
        )
        if expected_follow != list(rec["follow_ups"]):
            return diverge("follow_ups", rec["follow_ups"], expected_follow)

        from_forced = bool(pre["forced_queue"]) and pre["forced_queue"][0] == selected
        rest = tuple(pre["forced_queue"][1:] if from_forced else pre["forced_queue"])
        merged = merge_forced(tuple(rec["injected"]), tuple(rec["follow_ups"]), rest)
        if list(merged) != list(rec["post"]["forced_queue"]):
            return diverge("post.forced_queue", rec["post"]["forced_queue"], list(merged))

    return ReplayReport(checked=len(records))


def _selection_state(pre: dict[str, Any], step: int) -> ControllerState:
    from .obligations import ObligationVector
    from .workspace import WorkspaceSummary

    # A minimal stand-in summary; admissible() never reads it (phase
    # filters use mode, guards use features), so zeros are safe.
    empty = WorkspaceSummary.from_dict(
        {
            "theory": {
                "present": False,
                "doc_paths": [],
                "word_count": 0,
                "revision_count": 0,
            },
            "repos": [],
            "public": {
                "paper_paths": [],
                "readme_paths": [],
                "paper_word_count": 0,
                "readme_word_count": 0,
                "last_modified_step": 0,
            },
            "evidence": {
                "benchmark_count": 0,
                "ledger_path": None,
                "grounded_claim_ratio": 0.0,
                "test_pass_ratio": 0.0,
            },
            "utility_present": False,
            "utility_text": "",
            "open_obligations": [],
            "snapshot_step": step,
        }
    )
    return ControllerState(
        workspace=empty,
        mode=Mode(pre["mode"]),
        obligations=ObligationVector(**pre["obligations"]),
        forced_queue=tuple(pre["forced_queue"]),
        history=tuple(pre["history"]),
        step=step,
        budget_remaining=int(pre["budget_remaining"]),
        tail_progress=int(pre["tail_progress"]),
    )
