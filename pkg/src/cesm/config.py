"""Run configuration: TOML in, fully validated objects out.

A config file is rejected at load time with every violation listed, not
just the first; a run never starts on a half-valid config. The TOML
surface is documented in docs/formats.md; everything has a default
except workspace_root.
"""
from __future__ import annotations

import hashlib
import os
from pathlib import Path
from typing import Any, Mapping, Optional

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from pydantic import BaseModel, Field, ValidationError, model_validator

from .alphabet import ALPHABET, SYMBOLS
from .controller import DEFAULT_TAIL_SEQUENCE, GuardConfig, WeightTable
from .jsonio import canonical_dumps
from .obligations import AXES, DEFAULT_DECAY, ObligationVector, PushTable
from .trigger import DEFAULT_TRACKED_PATTERNS
from .workspace import FEATURE_NAMES, DeficitTargets

__all__ = ["ConfigError", "RunConfig", "load_config", "config_from_dict"]


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid run config:\n" + "\n".join(f"- {p}" for p in problems))


class ScorerConfig(BaseModel):
    rho: float = 0.5
    history_window: int = 6


class TargetsConfig(BaseModel):
    theory_words: float = 500.0
    loc: float = 2000.0
    paper_words: float = 1500.0
    readme_words: float = 300.0
    benchmark_count: float = 3.0
    grounding_ratio: float = 0.9
    test_pass_ratio: float = 1.0


class GuardsConfig(BaseModel):
    min_repos: int = 1
    loc_low_threshold: float = 0.7


class ObligationsConfig(BaseModel):
    # decay defaults to the exact half-life-8 rate, 2 ** (-1/8); a literal
    # in TOML overrides it (the ablation harness passes 1.0 here).
    decay: Optional[float] = None
    half_life_steps: float = 8.0
    push: dict[str, dict[str, float]] = Field(default_factory=dict)
    paper_hook: float = 1.0
    readme_hook: float = 1.0


class TriggerConfig(BaseModel):
    patterns: list[str] = Field(default_factory=lambda: list(DEFAULT_TRACKED_PATTERNS))


class TailConfig(BaseModel):
    sequence: list[str] = Field(default_factory=lambda: list(DEFAULT_TAIL_SEQUENCE))


class ExecutorConfig(BaseModel):
    mode: str = "mock"
    script: Optional[str] = None
    agent_cmd: Optional[str] = None
    timeout: float = 600.0


class AdjacencyConfig(BaseModel):
    judge: str = "heuristic"
    judge_cmd: Optional[str] = None
    judge_timeout: float = 10.0


class RunConfig(BaseModel):
    workspace_root: str
    budget: int = 40
    seed: int = 0
    templates_dir: Optional[str] = None
    scorer: ScorerConfig = Field(default_factory=ScorerConfig)
    weights: dict[str, dict[str, float]] = Field(default_factory=dict)
    biases: dict[str, float] = Field(default_factory=dict)
    targets: TargetsConfig = Field(default_factory=TargetsConfig)
    guards: GuardsConfig = Field(default_factory=GuardsConfig)
    obligations: ObligationsConfig = Field(default_factory=ObligationsConfig)
    trigger: TriggerConfig = Field(default_factory=TriggerConfig)
    tail: TailConfig = Field(default_factory=TailConfig)
    executor: ExecutorConfig = Field(default_factory=ExecutorConfig)
    adjacency: AdjacencyConfig = Field(default_factory=AdjacencyConfig)

    @model_validator(mode="after")
    def _check(self) -> "RunConfig":
        problems: list[str] = []
        known = set(SYMBOLS)

        if self.budget < 0:
            problems.append(f"budget must be >= 0, got {self.budget}")
        if self.scorer.rho < 0:
            problems.append(f"scorer.rho must be >= 0, got {self.scorer.rho}")
        if self.scorer.history_window < 1:
            problems.append("scorer.history_window must be >= 1")

        for sid, row in self.weights.items():
            if sid not in known:
                problems.append(f"weights: unknown symbol {sid!r}")
                continue
            for feat in row:
                if feat not in FEATURE_NAMES:
                    problems.append(f"weights.{sid}: unknown feature {feat!r}")
        for sid in self.biases:
            if sid not in known:
                problems.append(f"biases: unknown symbol {sid!r}")

        for name, value in self.targets.model_dump().items():
            if value <= 0:
                problems.append(f"targets.{name} must be > 0, got {value}")

        if self.guards.min_repos < 0:
            problems.append("guards.min_repos must be >= 0")
        if not (0.0 <= self.guards.loc_low_threshold <= 1.0):
            problems.append("guards.loc_low_threshold must lie in [0, 1]")

        decay = self.decay_value
        if not (0.0 < decay <= 1.0):
            problems.append(f"obligations decay must lie in (0, 1], got {decay}")
        if self.obligations.half_life_steps <= 0:
            problems.append("obligations.half_life_steps must be > 0")
        for sid, push in self.obligations.push.items():
            if sid not in known:
                problems.append(f"obligations.push: unknown symbol {sid!r}")
                continue
            for axis, value in push.items():
                if axis not in AXES:
                    problems.append(f"obligations.push.{sid}: unknown axis {axis!r}")
                elif value < 0:
                    problems.append(f"obligations.push.{sid}.{axis} must be >= 0")
        if self.obligations.paper_hook < 0 or self.obligations.readme_hook < 0:
            problems.append("obligation hook pushes must be >= 0")

        if not self.tail.sequence:
            problems.append("tail.sequence must be nonempty")
        for sid in self.tail.sequence:
            if sid not in known:
                problems.append(f"tail.sequence: unknown symbol {sid!r}")
            elif SYMBOLS[sid].expansive:
                problems.append(
                    f"tail.sequence: expansive symbol {sid} would break the "
                    "tail guarantee"
                )

        if self.executor.mode not in ("mock", "subprocess"):
            problems.append(f"executor.mode must be mock or subprocess, got {self.executor.mode!r}")
        if self.executor.mode == "mock" and not self.executor.script:
            problems.append("executor.mode=mock requires executor.script")
        if self.executor.mode == "subprocess" and not (
            self.executor.agent_cmd or os.environ.get("CESM_AGENT_CMD")
        ):
            problems.append(
                "executor.mode=subprocess requires executor.agent_cmd "
                "(or CESM_AGENT_CMD in the environment)"
            )
        if self.executor.timeout <= 0:
            problems.append("executor.timeout must be > 0")

        if self.adjacency.judge not in ("heuristic", "command"):
            problems.append(f"adjacency.judge must be heuristic or command, got {self.adjacency.judge!r}")
        if self.adjacency.judge == "command" and not self.adjacency.judge_cmd:
            problems.append("adjacency.judge=command requires adjacency.judge_cmd")
        if self.adjacency.judge_timeout <= 0:
            problems.append("adjacency.judge_timeout must be > 0")

        if problems:
            raise ConfigError(problems)
        return self

    @property
    def decay_value(self) -> float:
        if self.obligations.decay is not None:
            return self.obligations.decay
        if self.obligations.half_life_steps == 8.0:
            return DEFAULT_DECAY
        return 2.0 ** (-1.0 / self.obligations.half_life_steps)

    @property
    def root(self) -> Path:
        return Path(self.workspace_root)

    def weight_table(self) -> WeightTable:
        table = WeightTable.default()
        rows = {sid: dict(row) for sid, row in table.rows.items()}
        for sid, row in self.weights.items():
            rows[sid] = dict(row)
        biases = dict(table.biases)
        biases.update(self.biases)
        return WeightTable(rows=rows, biases=biases, rho=self.scorer.rho)

    def push_table(self) -> PushTable:
        by_symbol = {
            s.id: ObligationVector(1.0, 1.0, 0.5, 0.0, 0.0)
            for s in ALPHABET
            if s.expansive
        }
        for sid, push in self.obligations.push.items():
            by_symbol[sid] = ObligationVector(
                **{axis: push.get(axis, 0.0) for axis in AXES}
            )
        paper = ObligationVector(paper_sync=self.obligations.paper_hook)
        readme = ObligationVector(readme_sync=self.obligations.readme_hook)
        return PushTable(by_symbol=by_symbol, paper_hook=paper, readme_hook=readme)

    def deficit_targets(self) -> DeficitTargets:
        return DeficitTargets(**self.targets.model_dump())

    def guard_config(self) -> GuardConfig:
        return GuardConfig(**self.guards.model_dump())

    def agent_command(self) -> Optional[str]:
        return os.environ.get("CESM_AGENT_CMD") or self.executor.agent_cmd

    def policy_hash(self) -> str:
        """Hash of everything that determines behavior, minus deployment paths.

        workspace_root is excluded (a relocated workspace may resume), the
        mock script path is replaced by a hash of the script's content (an
        edited script must refuse to resume even at the same path).
        """
        data = self.model_dump()
        data.pop("workspace_root", None)
        script = data.get("executor", {}).get("script")
        if script:
            script_path = Path(script)
            if not script_path.is_absolute():
                script_path = self.root / script_path
            try:
                content_hash = hashlib.sha256(script_path.read_bytes()).hexdigest()
            except OSError:
                content_hash = "missing"
            data["executor"]["script"] = f"sha256:{content_hash}"
        return hashlib.sha256(canonical_dumps(data).encode()).hexdigest()


def _merge(base: dict[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for key, value in overrides.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def config_from_dict(
    data: Mapping[str, Any], overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    merged = _merge(dict(data), overrides or {})
    try:
        return RunConfig.model_validate(merged)
    except ConfigError:
        raise
    except ValidationError as exc:
        # pydantic wraps the validator's ConfigError; surface the original
        # so callers keep the flat problems list.
        for err in exc.errors():
            original = (err.get("ctx") or {}).get("error")
            if isinstance(original, ConfigError):
                raise original from exc
        problems = [
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}"
            for err in exc.errors()
        ]
        raise ConfigError(problems) from exc


def load_config(
    path: Path | str, overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    """Parse and validate a TOML run config.

    Relative workspace_root, script, and templates paths are resolved
    against the config file's directory.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"]) from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"config is not valid TOML: {exc}"]) from exc

    base = path.parent.resolve()
    for key in ("workspace_root", "templates_dir"):
        value = data.get(key)
        if isinstance(value, str) and value and not Path(value).is_absolute():
            data[key] = str(base / value)
    executor = data.get("executor")
    if isinstance(executor, dict):
        script = executor.get("script")
        if isinstance(script, str) and script and not Path(script).is_absolute():
            executor["script"] = str(base / script)
    return config_from_dict(data, overrides)
