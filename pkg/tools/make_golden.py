"""Cross-check the controller against the reference simulator and freeze
the golden trace.

For every scenario fixture this runs the real orchestrator in a temp
workspace and tests/reference_sim.py on the same script, then compares
every decision field step by step. The golden trace fixture is only
written while the two agree everywhere:

    python3 tools/make_golden.py            # cross-check all scenarios
    python3 tools/make_golden.py --freeze   # also write trace-golden.json
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import tempfile
from pathlib import Path

PKG = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(PKG / "tests"))

import reference_sim as rs  # noqa: E402

from cesm import config_from_dict  # noqa: E402
from cesm.controller import AblationSwitches  # noqa: E402
from cesm.obligations import AXES  # noqa: E402
from cesm.orchestrator import run  # noqa: E402

SCENARIO_DIR = PKG / "tests" / "fixtures" / "scenarios"
GOLDEN_OUT = PKG / "tests" / "fixtures" / "trace-golden.json"

# Each scenario is checked under no switches plus the arms that the
# ablation harness will actually run it with.
SCENARIO_ARMS = {
    "golden.json": [(), ()],
    "fabrication.json": [(), ("trigger_off",)],
    "pivots.json": [(), ("adjacency_off",)],
    "pressure.json": [(), ("decay_off",)],
    "syncpaper.json": [(), ("paper_first_off",)],
    "benchsearch.json": [(), ("benchmark_judge_off",)],
    "ledgered.json": [(), ("ledger_off",)],
}

FLOAT_TOL = 1e-12


def _close(a: float, b: float) -> bool:
    return a == b or math.isclose(a, b, rel_tol=0.0, abs_tol=FLOAT_TOL)


def run_controller(scenario_path: Path, switch_names: tuple[str, ...], workdir: Path):
    scenario = json.loads(scenario_path.read_text(encoding="utf-8"))
    overrides = scenario.get("overrides", {})
    cfg = config_from_dict(
        {
            "workspace_root": str(workdir),
            "budget": overrides.get("budget", 40),
            "biases": overrides.get("biases", {}),
            "executor": {"mode": "mock", "script": str(scenario_path)},
        }
    )
    switches = AblationSwitches(**{f"{n}": True for n in switch_names})
    return run(cfg, switches=switches), scenario, overrides


def run_sim(scenario: dict, overrides: dict, switch_names: tuple[str, ...]):
    return rs.simulate(
        scenario,
        budget=overrides.get("budget", 40),
        biases=overrides.get("biases", {}),
        switches={name: True for name in switch_names},
    )


def compare(trace: list[dict], sim: list[dict], label: str) -> list[str]:
    problems: list[str] = []
    if len(trace) != len(sim):
        problems.append(f"{label}: length {len(trace)} != sim {len(sim)}")
    for rec, ref in zip(trace, sim):
        t = rec["step"]

        def bad(field: str, want, got) -> None:
            problems.append(f"{label} step {t} {field}: sim={want!r} controller={got!r}")

        exact = [
            ("selected", ref["selected"], rec["selected"]),
            ("admissible", list(ref["admissible"]), list(rec["admissible"])),
            ("outcome", ref["outcome"], rec["outcome"]),
            ("markers", list(ref["markers"]), list(rec["markers"])),
            ("from_forced", ref["from_forced"], rec["from_forced"]),
            ("from_tail", ref["from_tail"], rec["from_tail"]),
            ("injected", list(ref["injected"]), list(rec["injected"])),
            ("follow_ups", list(ref["follow_ups"]), list(rec["follow_ups"])),
            ("post.forced_queue", list(ref["queue_post"]), list(rec["post"]["forced_queue"])),
            ("post.mode", ref["mode_post"], rec["post"]["mode"]),
            ("post.budget", ref["budget_post"], rec["post"]["budget_remaining"]),
        ]
        for field, want, got in exact:
            if want != got:
                bad(field, want, got)

        for sid, want in ref["scores"].items():
            got = rec["scores"].get(sid)
            if got is None or not _close(want, got):
                bad(f"scores.{sid}", want, got)
        for name, want in ref["features"].items():
            got = rec["features"].get(name)
            if got is None or not _close(want, got):
                bad(f"features.{name}", want, got)
        got_obl = [rec["post"]["obligations"][axis] for axis in AXES]
        for axis, want, got in zip(AXES, ref["obligations_post"], got_obl):
            if not _close(want, got):
                bad(f"post.obligations.{axis}", want, got)
        if not _close(ref["pressure_post"], rec["post"]["pressure"]):
            bad("post.pressure", ref["pressure_post"], rec["post"]["pressure"])
        if problems:
            break
    return problems


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--freeze", action="store_true", help="write trace-golden.json")
    ap.add_argument("--scenario", action="append", help="check only these files")
    args = ap.parse_args()

    names = args.scenario or sorted(SCENARIO_ARMS)
    all_ok = True
    golden_payload = None

    for name in names:
        scenario_path = SCENARIO_DIR / name
        for arm in SCENARIO_ARMS.get(name, [()]):
            label = f"{name}[{'+'.join(arm) or 'on'}]"
            with tempfile.TemporaryDirectory(prefix="cesm-golden-") as tmp:
                result, scenario, overrides = run_controller(scenario_path, arm, Path(tmp))
            sim = run_sim(scenario, overrides, arm)
            problems = compare(result.trace, sim, label)
            seq = " ".join(r["selected"] for r in result.trace)
            if problems:
                all_ok = False
                print(f"FAIL {label}")
                for p in problems[:8]:
                    print(f"  {p}")
            else:
                print(f"ok   {label} ({len(result.trace)} steps)")
                print(f"     {seq}")
            if name == "golden.json" and not arm and not problems:
                golden_payload = {
                    "scenario": "scenarios/golden.json",
                    "budget": overrides.get("budget", 40),
                    "biases": overrides.get("biases", {}),
                    "trace": result.trace,
                    "final_state": result.final_state.to_dict(),
                    "violations": result.violations,
                }

    if args.freeze:
        if golden_payload is None:
            print("refusing to freeze: golden disagreement or not checked")
            return 1
        GOLDEN_OUT.write_text(
            json.dumps(golden_payload, indent=1, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        print(f"froze {GOLDEN_OUT} ({len(golden_payload['trace'])} records)")

    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
