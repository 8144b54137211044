"""Prompt executors: a real agent subprocess and a scripted mock.

The controller hands an executor a rendered prompt and a workspace root;
the executor runs one agent turn and reports an outcome. Both executors
write a transcript to .cesm/transcripts/step-<t>.log for every outcome.

The mock executor replays a script of file effects keyed by step number,
so simulated runs are fully deterministic: same script, same selections,
byte-identical workspace. Script schema (JSON):

    {
      "name": "golden",
      "max_steps": 40,
      "steps": [
        {
          "step": 3,
          "only_if_symbol": null,        optional; effects apply only when
                                         the executed symbol matches
          "outcome": "succeeded",        optional, default succeeded
          "markers": ["fabrication"],    optional trace markers
          "effects": [
            {"op": "write", "path": "README.md", "content": "...",
             "tags": ["paper_skeleton"]},
            {"op": "append", "path": "notes.md", "content": "..."},
            {"op": "delete", "path": "old.txt"},
            {"op": "mkdir", "path": "repos/demo"}
          ]
        }
      ]
    }

Executing a step beyond max_steps raises MockScriptExhausted: a run that
outlives its script is a fixture bug, not a condition to paper over.
"""
from __future__ import annotations

import os
import signal
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Protocol

from .jsonio import read_json

__all__ = [
    "OUTCOMES",
    "ExecutionRequest",
    "ExecutionResult",
    "Executor",
    "SubprocessExecutor",
    "MockExecutor",
    "MockScriptExhausted",
    "MockScriptError",
]

OUTCOMES = ("succeeded", "failed", "timed_out")

TRANSCRIPT_DIR = ".cesm/transcripts"


@dataclass(frozen=True)
class ExecutionRequest:
    symbol_id: str
    prompt_text: str
    root: Path
    step: int
    timeout: float = 600.0
    env: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ExecutionResult:
    outcome: str
    transcript_path: str
    duration: float
    artifacts: Mapping[str, str] = field(default_factory=dict)
    markers: tuple[str, ...] = ()


class Executor(Protocol):
    def execute(self, request: ExecutionRequest) -> ExecutionResult:
        ...


def _transcript_path(root: Path, step: int) -> tuple[Path, str]:
    rel = f"{TRANSCRIPT_DIR}/step-{step}.log"
    path = root / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    return path, rel


class SubprocessExecutor:
    """Run a configured agent command once per step.

    The command is a shell string; it receives the prompt on stdin and the
    prompt-file path in CESM_PROMPT_FILE (plus CESM_STEP and CESM_SYMBOL),
    runs with cwd at the workspace root, and gets its whole process tree
    killed on timeout.
    """

    def __init__(self, agent_cmd: str) -> None:
        if not agent_cmd.strip():
            raise ValueError("agent command must be nonempty")
        self.agent_cmd = agent_cmd

    def execute(self, request: ExecutionRequest) -> ExecutionResult:
        transcript, rel = _transcript_path(request.root, request.step)
        env = dict(os.environ)
        env.update(request.env)
        env["CESM_STEP"] = str(request.step)
        env["CESM_SYMBOL"] = request.symbol_id

        start = time.monotonic()
        with tempfile.NamedTemporaryFile(
            "w", suffix=".prompt", delete=False, encoding="utf-8"
        ) as pf:
            pf.write(request.prompt_text)
            prompt_file = pf.name
        env["CESM_PROMPT_FILE"] = prompt_file

        try:
            with open(transcript, "wb") as log:
                proc = subprocess.Popen(
                    self.agent_cmd,
                    shell=True,
                    cwd=request.root,
                    stdin=subprocess.PIPE,
                    stdout=log,
                    stderr=subprocess.STDOUT,
                    env=env,
                    start_new_session=True,
                )
                try:
                    proc.communicate(
                        request.prompt_text.encode(), timeout=request.timeout
                    )
                    outcome = "succeeded" if proc.returncode == 0 else "failed"
                except subprocess.TimeoutExpired:
                    # Kill the whole session so grandchildren cannot linger.
                    try:
                        os.killpg(proc.pid, signal.SIGKILL)
                    except (ProcessLookupError, PermissionError):
                        pass
                    proc.wait()
                    outcome = "timed_out"
        finally:
            try:
                os.unlink(prompt_file)
            except OSError:
                pass

        return ExecutionResult(
            outcome=outcome,
            transcript_path=rel,
            duration=time.monotonic() - start,
        )


class MockScriptError(ValueError):
    pass


class MockScriptExhausted(RuntimeError):
    pass


_EFFECT_OPS = ("write", "append", "delete", "mkdir")


@dataclass(frozen=True)
class _Effect:
    op: str
    path: str
    content: str
    tags: tuple[str, ...]


@dataclass(frozen=True)
class _ScriptStep:
    step: int
    only_if_symbol: Optional[str]
    outcome: str
    markers: tuple[str, ...]
    effects: tuple[_Effect, ...]


def _parse_effect(raw: Mapping[str, Any]) -> _Effect:
    op = raw.get("op")
    if op not in _EFFECT_OPS:
        raise MockScriptError(f"unknown effect op: {op!r}")
    path = raw.get("path")
    if not isinstance(path, str) or not path:
        raise MockScriptError(f"effect missing path: {raw!r}")
    return _Effect(
        op=op,
        path=path,
        content=str(raw.get("content", "")),
        tags=tuple(raw.get("tags", ())),
    )


class MockExecutor:
    """Deterministic executor driven by a step-keyed effect script."""

    def __init__(
        self, script: Mapping[str, Any], skip_tags: Iterable[str] = ()
    ) -> None:
        self.name = str(script.get("name", "mock"))
        try:
            self.max_steps = int(script["max_steps"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MockScriptError("script needs integer max_steps") from exc
        self.skip_tags = frozenset(skip_tags)
        steps: list[_ScriptStep] = []
        for raw in script.get("steps", ()):
            steps.append(
                _ScriptStep(
                    step=int(raw["step"]),
                    only_if_symbol=raw.get("only_if_symbol"),
                    outcome=str(raw.get("outcome", "succeeded")),
                    markers=tuple(raw.get("markers", ())),
                    effects=tuple(_parse_effect(e) for e in raw.get("effects", ())),
                )
            )
        for entry in steps:
            if entry.outcome not in OUTCOMES:
                raise MockScriptError(f"step {entry.step}: bad outcome {entry.outcome!r}")
            if entry.step > self.max_steps:
                raise MockScriptError(
                    f"step {entry.step} lies beyond max_steps={self.max_steps}"
                )
        self.steps = tuple(steps)

    @classmethod
    def from_file(cls, path: Path | str, skip_tags: Iterable[str] = ()) -> "MockExecutor":
        data = read_json(Path(path))
        if not isinstance(data, dict):
            raise MockScriptError("mock script must be a JSON object")
        return cls(data, skip_tags=skip_tags)

    def _safe_path(self, root: Path, rel: str) -> Path:
        # Mock effects must stay inside the workspace; a script that
        # reaches outside is malformed, never silently applied.
        candidate = Path(rel)
        if candidate.is_absolute() or ".." in candidate.parts:
            raise MockScriptError(f"effect path escapes workspace: {rel!r}")
        return root / candidate

    def _apply(self, root: Path, effect: _Effect) -> None:
        target = self._safe_path(root, effect.path)
        if effect.op == "write":
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(effect.content, encoding="utf-8")
        elif effect.op == "append":
            target.parent.mkdir(parents=True, exist_ok=True)
            with open(target, "a", encoding="utf-8") as fh:
                fh.write(effect.content)
        elif effect.op == "delete":
            if target.is_file():
                target.unlink()
        elif effect.op == "mkdir":
            target.mkdir(parents=True, exist_ok=True)

    def execute(self, request: ExecutionRequest) -> ExecutionResult:
        if request.step > self.max_steps:
            raise MockScriptExhausted(
                f"script {self.name!r} covers {self.max_steps} steps, "
                f"asked to execute step {request.step}"
            )
        transcript, rel = _transcript_path(request.root, request.step)
        matched = [
            s
            for s in self.steps
            if s.step == request.step
            and s.only_if_symbol in (None, request.symbol_id)
        ]
        outcome = "succeeded"
        markers: list[str] = []
        lines = [f"mock step {request.step} symbol {request.symbol_id}"]
        applied = 0
        for entry in matched:
            outcome = entry.outcome
            markers.extend(entry.markers)
            for effect in entry.effects:
                if self.skip_tags and set(effect.tags) & self.skip_tags:
                    lines.append(f"skip {effect.op} {effect.path} (tags {effect.tags})")
                    continue
                self._apply(request.root, effect)
                lines.append(f"{effect.op} {effect.path}")
                applied += 1
        lines.append(f"applied {applied} effects, outcome {outcome}")
        transcript.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return ExecutionResult(
            outcome=outcome,
            transcript_path=rel,
            duration=0.0,
            markers=tuple(markers),
        )
