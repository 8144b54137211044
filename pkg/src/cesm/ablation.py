"""Ablation harness: turn one mechanism off, run the same script, compare.

Six switches exist, each mapping to one mechanism:

  adjacency        pivots disabled (PortfolioExpansion never admissible,
                   expansive steps run ungated)
  ledger           audited-claim tracking ignored; the unsupported-claim
                   metric counts every public literal
  paper_first      paper_skeleton-tagged script effects are dropped, so
                   the paper appears late
  decay            obligation decay rate set to 1.0 (no forgetting)
  trigger          no reactive injection, no sync hooks
  benchmark_judge  BenchmarkSearch never admissible

A comparison runs the scenario twice in fresh scratch workspaces (control
arm: everything on; ablated arm: exactly one switch off) and compares six
metrics against the expected direction for that switch. Factorial mode is
a separate explicit flag: every on/off combination of the listed switches
on one scenario, raw metrics only, no direction checks.
"""
from __future__ import annotations

import csv
import io
import itertools
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

from .config import RunConfig, _merge, config_from_dict
from .controller import AblationSwitches
from .jsonio import read_json, write_canonical_json
from .ledger import Ledger, LedgerError, scan_public_literals
from .obligations import DEFAULT_DECAY, pressure_bound
from .orchestrator import RunResult, run

__all__ = [
    "SWITCHES",
    "EXPECTED_DIRECTIONS",
    "SimMetrics",
    "AblationComparison",
    "AblationSpec",
    "run_comparison",
    "run_ablation_spec",
    "render_table",
    "render_csv",
]

SWITCHES: tuple[str, ...] = (
    "adjacency",
    "ledger",
    "paper_first",
    "decay",
    "trigger",
    "benchmark_judge",
)

# Direction the metric should move in the ablated arm relative to control:
# "+" strictly greater, "-" strictly smaller.
EXPECTED_DIRECTIONS: dict[str, list[tuple[str, str]]] = {
    "adjacency": [("pivot_count", "-"), ("benchmark_count", "-")],
    "ledger": [("unsupported_claims", "+")],
    "paper_first": [("first_sync_step", "+")],
    "decay": [("max_pressure", "+")],
    "trigger": [("persistence_depth", "+")],
    "benchmark_judge": [("benchmark_count", "-")],
}

_ATTEMPTED = ("succeeded", "failed", "timed_out")


@dataclass(frozen=True)
class SimMetrics:
    pivot_count: int
    unsupported_claims: int
    first_sync_step: int
    max_pressure: float
    persistence_depth: int
    benchmark_count: int

    def as_dict(self) -> dict[str, Any]:
        return {
            "pivot_count": self.pivot_count,
            "unsupported_claims": self.unsupported_claims,
            "first_sync_step": self.first_sync_step,
            "max_pressure": self.max_pressure,
            "persistence_depth": self.persistence_depth,
            "benchmark_count": self.benchmark_count,
        }


def _unsupported_claims(root: Path, ledger_enabled: bool) -> int:
    """Public literals not covered by a grounded claim's source span."""
    literals = scan_public_literals(root)
    if not ledger_enabled:
        return len(literals)
    ledger_file = root / "grounding.json"
    spans: list[tuple[str, int, int]] = []
    if ledger_file.is_file():
        try:
            ledger = Ledger.load(ledger_file)
            spans = [
                (c.source_file, c.line_start, c.line_end)
                for c in ledger.claims
                if c.status == "grounded"
            ]
        except (LedgerError, OSError):
            spans = []
    return sum(
        1
        for lit in literals
        if not any(
            lit.file == f and start <= lit.line <= end for f, start, end in spans
        )
    )


def _first_sync_step(result: RunResult) -> int:
    """First executed-step count after which paper and grounded evidence
    both exist; trace length + 1 when that never happens.

    A record's features describe the state before that step, so the state
    after step i is read from record i+1, and the final state from the
    run's closing summary.
    """
    records = result.trace
    n = len(records)

    def features_ok(feats: Mapping[str, float]) -> bool:
        return feats["paper_deficit"] < 1.0 and feats["grounding_deficit"] < 1.0

    for s in range(1, n):
        if features_ok(records[s]["features"]):
            return s
    final = result.final_state.workspace
    if (
        final.public.paper_word_count > 0
        and final.evidence.grounded_claim_ratio > 0.0
    ):
        return n
    return n + 1


def _persistence_depth(result: RunResult) -> int:
    """Max steps a scripted fabrication survives before GroundingCreation.

    Depth for a fabrication at step t is u - t where u is the next
    executed GroundingCreation step; with none, the remaining step count
    to the end of the trace. 0 when no fabrication marker exists.
    """
    records = result.trace
    if not records:
        return 0
    last_step = records[-1]["step"]
    depths: list[int] = []
    for i, rec in enumerate(records):
        if "fabrication" not in rec.get("markers", ()):
            continue
        t = rec["step"]
        depth = last_step - t
        for later in records[i + 1 :]:
            if (
                later["selected"] == "GroundingCreation"
                and later["outcome"] in _ATTEMPTED
            ):
                depth = later["step"] - t
                break
        depths.append(depth)
    return max(depths, default=0)


def compute_metrics(result: RunResult, root: Path, ledger_enabled: bool) -> SimMetrics:
    pivots = sum(
        1
        for rec in result.trace
        if rec["selected"] == "PortfolioExpansion" and rec["outcome"] in _ATTEMPTED
    )
    max_pressure = max((rec["post"]["pressure"] for rec in result.trace), default=0.0)
    return SimMetrics(
        pivot_count=pivots,
        unsupported_claims=_unsupported_claims(root, ledger_enabled),
        first_sync_step=_first_sync_step(result),
        max_pressure=max_pressure,
        persistence_depth=_persistence_depth(result),
        benchmark_count=result.final_state.workspace.evidence.benchmark_count,
    )


def _switches_for(switch: Optional[str]) -> AblationSwitches:
    if switch is None:
        return AblationSwitches()
    if switch not in SWITCHES:
        raise ValueError(f"unknown ablation switch: {switch!r}")
    return AblationSwitches(**{f"{switch}_off": True})


def _load_scenario(path: Path) -> dict[str, Any]:
    data = read_json(path)
    if not isinstance(data, dict) or "max_steps" not in data:
        raise ValueError(f"scenario {path} must be a mock script object")
    return data


def _arm_config(
    scenario: Mapping[str, Any],
    workspace: Path,
    switch: Optional[str],
    base_overrides: Optional[Mapping[str, Any]],
) -> RunConfig:
    data: dict[str, Any] = {}
    if base_overrides:
        data = _merge(data, base_overrides)
    data = _merge(data, scenario.get("overrides", {}))
    data["workspace_root"] = str(workspace)
    executor = dict(data.get("executor", {}))
    executor["mode"] = "mock"
    # The script itself travels as an in-memory overlay; the path only
    # satisfies validation and never gets read.
    executor.setdefault("script", "overlay")
    data["executor"] = executor
    if switch == "decay":
        obligations = dict(data.get("obligations", {}))
        obligations["decay"] = 1.0
        data["obligations"] = obligations
    return config_from_dict(data)


def _run_arm(
    scenario: dict[str, Any],
    workspace: Path,
    switch: Optional[str],
    base_overrides: Optional[Mapping[str, Any]],
) -> tuple[RunResult, SimMetrics]:
    if workspace.exists():
        shutil.rmtree(workspace)
    workspace.mkdir(parents=True)
    cfg = _arm_config(scenario, workspace, switch, base_overrides)
    switches = _switches_for(switch)
    result = run(cfg, switches=switches, script_overlay=scenario)
    metrics = compute_metrics(
        result, workspace, ledger_enabled=not switches.ledger_off
    )
    return result, metrics


@dataclass
class AblationComparison:
    switch: str
    scenario: str
    control: SimMetrics
    ablated: SimMetrics
    expectations: list[dict[str, Any]]
    matches: bool
    determinism_ok: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "switch": self.switch,
            "scenario": self.scenario,
            "control": self.control.as_dict(),
            "ablated": self.ablated.as_dict(),
            "expectations": self.expectations,
            "matches": self.matches,
            "determinism_ok": self.determinism_ok,
        }


def _check_expectations(
    switch: str, control: SimMetrics, ablated: SimMetrics
) -> tuple[list[dict[str, Any]], bool]:
    checks: list[dict[str, Any]] = []
    all_ok = True
    for metric, direction in EXPECTED_DIRECTIONS[switch]:
        c = control.as_dict()[metric]
        a = ablated.as_dict()[metric]
        ok = a > c if direction == "+" else a < c
        checks.append(
            {
                "metric": metric,
                "direction": direction,
                "control": c,
                "ablated": a,
                "matches": ok,
            }
        )
        all_ok = all_ok and ok
    if switch == "decay":
        # The no-decay arm must actually breach the boundedness guarantee
        # while the control arm respects it.
        bound = pressure_bound(5, 1.0, DEFAULT_DECAY)
        breach = ablated.max_pressure > bound
        respect = control.max_pressure <= bound
        checks.append(
            {
                "metric": "max_pressure_vs_bound",
                "direction": "+",
                "control": control.max_pressure,
                "ablated": ablated.max_pressure,
                "bound": bound,
                "matches": breach and respect,
            }
        )
        all_ok = all_ok and breach and respect
    return checks, all_ok


def run_comparison(
    switch: str,
    scenario_path: Path | str,
    workdir: Path | str,
    base_overrides: Optional[Mapping[str, Any]] = None,
    repetitions: int = 1,
) -> AblationComparison:
    """Control vs ablated on one scenario; repetitions re-check determinism."""
    scenario_path = Path(scenario_path)
    workdir = Path(workdir)
    scenario = _load_scenario(scenario_path)

    determinism_ok = True
    control_metrics: Optional[SimMetrics] = None
    ablated_metrics: Optional[SimMetrics] = None
    for rep in range(max(1, repetitions)):
        _, control = _run_arm(
            scenario, workdir / f"{switch}-control", None, base_overrides
        )
        _, ablated = _run_arm(
            scenario, workdir / f"{switch}-ablated", switch, base_overrides
        )
        if rep == 0:
            control_metrics, ablated_metrics = control, ablated
        elif (control, ablated) != (control_metrics, ablated_metrics):
            determinism_ok = False

    expectations, matches = _check_expectations(
        switch, control_metrics, ablated_metrics
    )
    return AblationComparison(
        switch=switch,
        scenario=str(scenario_path),
        control=control_metrics,
        ablated=ablated_metrics,
        expectations=expectations,
        matches=matches and determinism_ok,
        determinism_ok=determinism_ok,
    )


@dataclass
class AblationSpec:
    """Parsed ablate spec file.

    JSON schema: {"switches": [...] or "all", "scenarios": {switch: path},
    "output_dir": path, "repetitions": int, "factorial": bool,
    "factorial_scenario": path, "overrides": {...}}. Scenario paths are
    relative to the spec file.
    """

    switches: list[str]
    scenarios: dict[str, Path]
    output_dir: Path
    repetitions: int
    factorial: bool
    factorial_scenario: Optional[Path]
    overrides: Optional[dict[str, Any]]

    @classmethod
    def load(cls, path: Path | str) -> "AblationSpec":
        path = Path(path)
        data = read_json(path)
        base = path.parent
        raw_switches = data.get("switches", "all")
        switches = list(SWITCHES) if raw_switches == "all" else list(raw_switches)
        for s in switches:
            if s not in SWITCHES:
                raise ValueError(f"unknown switch in spec: {s!r}")
        scenarios = {
            s: (base / p if not Path(p).is_absolute() else Path(p))
            for s, p in data.get("scenarios", {}).items()
        }
        missing = [s for s in switches if s not in scenarios and not data.get("factorial")]
        if missing:
            raise ValueError(f"spec lists switches without scenarios: {missing}")
        out = Path(data.get("output_dir", "ablation-out"))
        if not out.is_absolute():
            out = base / out
        fact_scenario = data.get("factorial_scenario")
        return cls(
            switches=switches,
            scenarios=scenarios,
            output_dir=out,
            repetitions=int(data.get("repetitions", 1)),
            factorial=bool(data.get("factorial", False)),
            factorial_scenario=(
                base / fact_scenario if fact_scenario else None
            ),
            overrides=data.get("overrides"),
        )


def run_ablation_spec(spec: AblationSpec) -> dict[str, Any]:
    """Execute a spec and write report artifacts into its output dir.

    Returns the report dict; files written: ablation-report.json,
    ablation-table.txt, ablation-metrics.csv.
    """
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    report: dict[str, Any] = {"comparisons": [], "factorial": None}

    if spec.factorial:
        if spec.factorial_scenario is None:
            raise ValueError("factorial mode needs factorial_scenario")
        scenario = _load_scenario(spec.factorial_scenario)
        cells = []
        for bits in itertools.product([False, True], repeat=len(spec.switches)):
            off = [s for s, b in zip(spec.switches, bits) if b]
            switches = AblationSwitches(**{f"{s}_off": True for s in off})
            ws = spec.output_dir / "runs" / ("factorial-" + ("-".join(off) or "none"))
            if ws.exists():
                shutil.rmtree(ws)
            ws.mkdir(parents=True)
            cfg = _arm_config(scenario, ws, "decay" if "decay" in off else None, spec.overrides)
            result = run(cfg, switches=switches, script_overlay=scenario)
            metrics = compute_metrics(result, ws, ledger_enabled="ledger" not in off)
            cells.append({"off": off, "metrics": metrics.as_dict()})
        report["factorial"] = cells
    else:
        for switch in spec.switches:
            comparison = run_comparison(
                switch,
                spec.scenarios[switch],
                spec.output_dir / "runs",
                base_overrides=spec.overrides,
                repetitions=spec.repetitions,
            )
            report["comparisons"].append(comparison.to_dict())

    report["all_match"] = all(
        c["matches"] for c in report["comparisons"]
    ) if report["comparisons"] else None

    write_canonical_json(spec.output_dir / "ablation-report.json", report)
    (spec.output_dir / "ablation-table.txt").write_text(
        render_table(report), encoding="utf-8"
    )
    (spec.output_dir / "ablation-metrics.csv").write_text(
        render_csv(report), encoding="utf-8"
    )
    return report


_METRIC_ORDER = (
    "pivot_count",
    "unsupported_claims",
    "first_sync_step",
    "max_pressure",
    "persistence_depth",
    "benchmark_count",
)


def render_table(report: Mapping[str, Any]) -> str:
    lines = []
    header = f"{'switch':<16} {'metric':<22} {'control':>10} {'ablated':>10} {'dir':>4} {'ok':>4}"
    lines.append(header)
    lines.append("-" * len(header))
    for comp in report.get("comparisons", []):
        for exp in comp["expectations"]:
            control = exp["control"]
            ablated = exp["ablated"]
            fmt = (
                lambda v: f"{v:.3f}" if isinstance(v, float) else str(v)
            )
            lines.append(
                f"{comp['switch']:<16} {exp['metric']:<22} {fmt(control):>10} "
                f"{fmt(ablated):>10} {exp['direction']:>4} "
                f"{'yes' if exp['matches'] else 'NO':>4}"
            )
    if report.get("factorial"):
        lines.append("")
        lines.append("factorial cells:")
        for cell in report["factorial"]:
            off = ",".join(cell["off"]) or "none"
            lines.append(f"  off={off}: {cell['metrics']}")
    return "\n".join(lines) + "\n"


def render_csv(report: Mapping[str, Any]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["switch", "arm", *_METRIC_ORDER])
    for comp in report.get("comparisons", []):
        writer.writerow(
            [comp["switch"], "control"]
            + [comp["control"][m] for m in _METRIC_ORDER]
        )
        writer.writerow(
            [comp["switch"], "ablated"]
            + [comp["ablated"][m] for m in _METRIC_ORDER]
        )
    for cell in report.get("factorial") or []:
        writer.writerow(
            ["factorial:" + (",".join(cell["off"]) or "none"), "ablated"]
            + [cell["metrics"][m] for m in _METRIC_ORDER]
        )
    return buf.getvalue()
