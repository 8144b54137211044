"""Generate the mock-script scenario fixtures under tests/fixtures/scenarios.

Scenario content is built programmatically so that grounding-claim line
spans, judge keyword overlaps, and word counts are correct by construction
instead of hand-counted. Regenerate with:

    python3 tools/make_scenarios.py
"""
from __future__ import annotations

import json
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "scenarios"

_FILLER = (
    "the controller keeps a running summary of every surface it manages and "
    "spends its budget where the measured deficits say attention is owed"
).split()


def words(n: int, lead: str = "") -> str:
    """Deterministic prose of exactly n words."""
    out = lead.split()
    i = 0
    while len(out) < n:
        out.append(_FILLER[i % len(_FILLER)])
        i += 1
    return " ".join(out[:n])


def lines_to_text(lines: list[str]) -> str:
    return "\n".join(lines) + "\n"


def write(path: str, content: str, tags: list[str] | None = None) -> dict:
    eff: dict = {"op": "write", "path": path, "content": content}
    if tags:
        eff["tags"] = tags
    return eff


def append(path: str, content: str, tags: list[str] | None = None) -> dict:
    eff: dict = {"op": "append", "path": path, "content": content}
    if tags:
        eff["tags"] = tags
    return eff


def delete(path: str) -> dict:
    return {"op": "delete", "path": path}


def claim(
    cid: str,
    text: str,
    source_file: str,
    line: int,
    status: str = "grounded",
    line_end: int | None = None,
) -> dict:
    return {
        "id": cid,
        "text": text,
        "source_file": source_file,
        "line_start": line,
        "line_end": line_end if line_end is not None else line,
        "command": "printf ok",
        "expected_digest": "2689367b205c16ce32ed4200942b8b8b1e262dfc70d9bc9fbc77c49699a4f1df",
        "status": status,
        "last_checked_step": 0,
        "source_digest": "",
    }


def ledger(*claims: dict) -> str:
    return json.dumps({"claims": list(claims)}, indent=2, sort_keys=True) + "\n"


THEORY = lines_to_text(
    [
        "# Deficit-driven maintenance",
        "",
        words(
            60,
            "A budgeted controller can keep a research repository honest by "
            "reacting to measured deficits instead of a fixed schedule. The "
            "claim: forced grounding after every public benchmark change "
            "bounds how long a fabricated number can survive.",
        ),
        "",
        words(50, "Consequences a small artifact can check:"),
    ]
)

UTILITY = lines_to_text(
    [
        "# Who benefits",
        "",
        words(
            35,
            "Maintainers of small research repositories who cannot afford "
            "a standing review rotation; evaluate by benchmark coverage "
            "and grounded claim ratio.",
        ),
    ]
)

SEED_PROPOSAL = {
    "pivot": "build the first controller repository the theory asks for",
    "concrete_instance": (
        "create a core package with the deficit summarizer, one benchmark "
        "protocol, tests, and a README that states the measured pass rate"
    ),
    "preserved_capability": {"name": "theory statement", "ref": "THEORY.md"},
    "strengthened_evidence": "benchmarks/protocol.md",
    "claim_support": "c-readme-pass",
}

PROTOCOL = lines_to_text(
    [
        "# Benchmark protocol",
        "",
        words(30, "Fixed seed 7, ten held out cases, report exact match."),
    ]
)

# README.md v1: the 95% literal sits on line 4 by construction.
README_V1_LINES = [
    "# Workspace overview",
    "",
    "The controller implementation lives in core/.",
    "Latest regression pass rate: 95% on the recorded suite.",
    "",
    words(55, "Run the suite with pytest inside core after installing."),
]
README_V1 = lines_to_text(README_V1_LINES)

CORE_SRC = lines_to_text(
    [
        line
        for i in range(140)
        for line in (f"def surface_{i:03d}(x):", f"    return x + {i}", "")
    ]
)  # 420 lines
CORE_TESTS = lines_to_text(
    [
        line
        for i in range(25)
        for line in (f"def test_surface_{i:02d}():", f"    assert surface_{i:03d}({i}) == {2 * i}", "")
    ]
)  # 75 lines

PAPER_V1_LINES = [
    r"\documentclass{article}",
    r"\begin{document}",
    r"\section{Introduction}",
    words(
        90,
        "We present a budgeted controller that allocates maintenance "
        "steps by measured deficit.",
    ),
    r"\section{Method}",
    words(80, "The scorer is linear in twelve features."),
    r"\end{document}",
]
PAPER_V1 = lines_to_text(PAPER_V1_LINES)

# Appended at step 5; literal lines computed from the v1 line count.
_P5_OFFSET = len(PAPER_V1_LINES)
PAPER_V5_LINES = [
    r"\section{Evaluation}",
    "Exact match improves by 12.3% over the ablated scorer.",
    "Median step cost falls to 4.7 seconds per transition.",
    words(170, "Details of the held out protocol follow."),
    words(150, "We also report variance across ten seeds."),
]
PAPER_V5 = lines_to_text(PAPER_V5_LINES)
LIT_EXACT_LINE = _P5_OFFSET + 2  # the 12.3% line
LIT_COST_LINE = _P5_OFFSET + 3  # the 4.7 line

PAPER_V8 = lines_to_text(
    [
        r"\section{Discussion}",
        words(120, "The forced follow up pair is the load bearing mechanism."),
    ]
)

PAPER_V17 = lines_to_text(
    [
        r"\section{Limitations}",
        words(140, "The judge is a heuristic and the executor is scripted."),
    ]
)

README_V11 = lines_to_text(
    [
        "",
        "## Repository map",
        words(60, "core holds the controller, benchmarks the protocol files."),
    ]
)

README_V28 = lines_to_text(
    ["", words(40, "Final notes: the recorded suite is frozen for release.")]
)

LEDGER_V1 = ledger(
    claim("c-readme-pass", "95% pass rate", "README.md", 4, status="ungrounded"),
)
LEDGER_V3 = ledger(
    claim("c-readme-pass", "95% pass rate", "README.md", 4),
)
LEDGER_V6 = ledger(
    claim("c-readme-pass", "95% pass rate", "README.md", 4),
    claim("c-exact-match", "12.3% improvement", "paper/main.tex", LIT_EXACT_LINE),
    claim("c-step-cost", "4.7 s per step", "paper/main.tex", LIT_COST_LINE),
)

PIVOT_PROPOSAL = {
    "pivot": "extend the benchmark protocol with an adversarial repository",
    "concrete_instance": (
        "add a tools package that replays the recorded benchmark suite "
        "against adversarial cases and writes a comparison table"
    ),
    "preserved_capability": {"name": "benchmark protocol", "ref": "benchmarks/protocol.md"},
    "strengthened_evidence": "benchmarks/protocol.md",
    "claim_support": "benchmarks/pivot-case.md",
}

PIVOT_CASE = lines_to_text(["# Adversarial pivot case", words(25, "Ten cases.")])

TOOLS_SRC = lines_to_text(
    [
        line
        for i in range(70)
        for line in (f"def replay_{i:02d}(case):", "    return case", "")
    ]
)  # 210 lines


def _skeleton_steps() -> list[dict]:
    """Steps 0..4 shared by most scenarios: theory, utility, seed repo."""
    return [
        {"step": 0, "effects": [write("THEORY.md", THEORY)]},
        {
            "step": 1,
            "effects": [
                write("UTILITY.md", UTILITY),
                write("benchmarks/protocol.md", PROTOCOL),
                write("grounding.json", LEDGER_V1),
                write("expansion.json", json.dumps(SEED_PROPOSAL, indent=2) + "\n"),
            ],
        },
        {
            "step": 2,
            "effects": [
                write("core/pyproject.toml", '[project]\nname = "core"\n'),
                write("core/README.md", lines_to_text(["# core", "", words(40, "Deficit summarizer and scorer.")])),
                write("core/src/core.py", CORE_SRC),
                write("core/tests/test_core.py", CORE_TESTS),
                write("README.md", README_V1),
                write("paper/main.tex", PAPER_V1, tags=["paper_skeleton"]),
                write(".cesm/build-status.json", '{"core": true}\n'),
            ],
        },
        {"step": 3, "effects": [write("grounding.json", LEDGER_V3)]},
        {
            "step": 4,
            "effects": [write("test-report.json", '{"passed": 6, "failed": 2}\n')],
        },
    ]


def golden() -> dict:
    steps = _skeleton_steps()
    steps += [
        {"step": 5, "effects": [append("paper/main.tex", PAPER_V5)]},
        {"step": 6, "effects": [write("grounding.json", LEDGER_V6)]},
        {
            "step": 7,
            "effects": [write("critique.md", lines_to_text(["# Audit notes", words(25, "Spans verified.")]))],
        },
        {"step": 8, "effects": [append("paper/main.tex", PAPER_V8)]},
        {
            "step": 9,
            "effects": [
                write("expansion.json", json.dumps(PIVOT_PROPOSAL, indent=2) + "\n"),
                write("benchmarks/pivot-case.md", PIVOT_CASE),
            ],
        },
        {
            "step": 10,
            "effects": [write("test-report.json", '{"passed": 9, "failed": 0}\n')],
        },
        {"step": 11, "effects": [append("README.md", README_V11)]},
    ]
    # The pivot yields the tools repo on whichever step wins the gate;
    # rejected steps skip execution, so only the one pass applies these.
    steps += [
        {
            "step": t,
            "only_if_symbol": "PortfolioExpansion",
            "effects": [
                write("tools/pyproject.toml", '[project]\nname = "tools"\n'),
                write("tools/README.md", lines_to_text(["# tools", "", words(30, "Adversarial replay helpers.")])),
                write("tools/src/replay.py", TOOLS_SRC),
                write(".cesm/build-status.json", '{"core": true, "tools": true}\n'),
            ],
        }
        for t in range(21, 27)
    ]
    steps += [
        {
            "step": 16,
            "effects": [write("test-report.json", '{"passed": 14, "failed": 0}\n')],
        },
        {"step": 17, "effects": [append("paper/main.tex", PAPER_V17)]},
        {
            "step": 20,
            "effects": [
                write("benchmarks/suite_io.md", lines_to_text(["# IO suite", words(20, "Cases.")])),
                write("benchmarks/results.md", lines_to_text(["# Results", words(20, "Table.")])),
            ],
        },
        {"step": 27, "effects": [delete("benchmarks/pivot-case.md")]},
        {"step": 28, "effects": [append("README.md", README_V28)]},
        {
            "step": 33,
            "effects": [write("test-report.json", '{"passed": 16, "failed": 0}\n')],
        },
        {
            "step": 34,
            "only_if_symbol": "Critique",
            "effects": [write("critique.md", lines_to_text(["# Referee report", words(40, "Numbered points follow.")]))],
        },
        {
            "step": 35,
            "only_if_symbol": "ResponseToCritique",
            "effects": [append("critique.md", lines_to_text(["", words(30, "Dispositions.")]))],
        },
    ]
    return {
        "name": "golden",
        "max_steps": 40,
        "overrides": {"budget": 40, "biases": {"PortfolioExpansion": 1.6}},
        "steps": steps,
    }


def fabrication() -> dict:
    steps = _skeleton_steps()
    steps += [
        {
            "step": 5,
            "markers": ["fabrication"],
            "effects": [
                append(
                    "paper/main.tex",
                    "Our method reaches 99.9% exact match on every case.\n",
                )
            ],
        },
    ]
    return {
        "name": "fabrication",
        "max_steps": 16,
        "overrides": {"budget": 16, "biases": {"GroundingCreation": -1.0}},
        "steps": steps,
    }


def pivots() -> dict:
    steps = _skeleton_steps()
    steps += [
        {
            "step": 3,
            "effects": [
                write("expansion.json", json.dumps(PIVOT_PROPOSAL, indent=2) + "\n"),
                write("benchmarks/pivot-case.md", PIVOT_CASE),
            ],
        },
        {
            "step": 5,
            "only_if_symbol": "PortfolioExpansion",
            "effects": [
                write("tools/pyproject.toml", '[project]\nname = "tools"\n'),
                write("tools/README.md", lines_to_text(["# tools", "", words(30, "Adversarial replay helpers.")])),
                write("tools/src/replay.py", TOOLS_SRC),
                write("benchmarks/pivot-bench.md", lines_to_text(["# Pivot bench", words(15, "Cases.")])),
                write(".cesm/build-status.json", '{"core": true, "tools": true}\n'),
            ],
        },
        # Second staging references a benchmark case that never exists, so
        # the next PortfolioExpansion win must come back gate_rejected.
        {
            "step": 6,
            "effects": [
                write(
                    "expansion.json",
                    json.dumps(
                        {**PIVOT_PROPOSAL, "claim_support": "benchmarks/missing-case.md"},
                        indent=2,
                    )
                    + "\n",
                )
            ],
        },
    ]
    return {
        "name": "pivots",
        "max_steps": 18,
        "overrides": {"budget": 18, "biases": {"PortfolioExpansion": 3.0}},
        "steps": steps,
    }


def pressure() -> dict:
    steps = _skeleton_steps()
    for t in range(5, 105):
        steps.append(
            {
                "step": t,
                "effects": [
                    append("paper/main.tex", f"Revision note {t} for the running evaluation.\n"),
                    append("README.md", f"Status line {t}.\n"),
                ],
            }
        )
    return {
        "name": "pressure",
        "max_steps": 120,
        "overrides": {"budget": 120},
        "steps": steps,
    }


def syncpaper() -> dict:
    steps = _skeleton_steps()
    steps += [
        {
            "step": 5,
            "effects": [
                write(
                    "paper/extra.tex",
                    lines_to_text([r"\section{Late draft}", words(60, "Drafted after the code existed.")]),
                )
            ],
        },
    ]
    return {
        "name": "syncpaper",
        "max_steps": 14,
        "overrides": {"budget": 14},
        "steps": steps,
    }


def benchsearch() -> dict:
    steps = _skeleton_steps()
    steps += [
        {
            "step": 5,
            "only_if_symbol": "BenchmarkSearch",
            "effects": [
                write("benchmarks/found_suite.md", lines_to_text(["# Found suite", words(20, "Cases.")])),
            ],
        },
        {
            "step": 6,
            "only_if_symbol": "BenchmarkSearch",
            "effects": [
                write("benchmarks/found_suite_2.md", lines_to_text(["# Second found suite", words(20, "Cases.")])),
            ],
        },
    ]
    return {
        "name": "benchsearch",
        "max_steps": 16,
        "overrides": {"budget": 16, "biases": {"BenchmarkSearch": 2.0}},
        "steps": steps,
    }


def ledgered() -> dict:
    steps = _skeleton_steps()
    steps += [
        {"step": 5, "effects": [append("paper/main.tex", PAPER_V5)]},
        {"step": 6, "effects": [write("grounding.json", LEDGER_V6)]},
    ]
    return {
        "name": "ledgered",
        "max_steps": 14,
        "overrides": {"budget": 14},
        "steps": steps,
    }


def tailsweep() -> dict:
    """Budget-sweep scenario for the tail guarantee.

    Every effect lands outside the tracked public patterns (no README, no
    paper sources), so the reactive trigger never fires and the closing
    order is purely the scheduler's doing, at any budget up to 40.
    """
    steps = []
    for t in (0, 5, 12, 19, 26, 33, 38):
        steps.append(
            {
                "step": t,
                "effects": [
                    write(
                        f"notes/log-{t:02d}.md",
                        lines_to_text([f"# Step {t}", words(12, "Working notes only.")]),
                    )
                ],
            }
        )
    return {
        "name": "tailsweep",
        "max_steps": 40,
        "overrides": {"budget": 40},
        "steps": steps,
    }


def ablation_spec() -> dict:
    return {
        "switches": "all",
        "scenarios": {
            "adjacency": "pivots.json",
            "ledger": "ledgered.json",
            "paper_first": "syncpaper.json",
            "decay": "pressure.json",
            "trigger": "fabrication.json",
            "benchmark_judge": "benchsearch.json",
        },
        "output_dir": "../../../ablation-out",
        "repetitions": 2,
    }


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    scenarios = {
        "golden.json": golden(),
        "fabrication.json": fabrication(),
        "pivots.json": pivots(),
        "pressure.json": pressure(),
        "syncpaper.json": syncpaper(),
        "benchsearch.json": benchsearch(),
        "ledgered.json": ledgered(),
        "tailsweep.json": tailsweep(),
    }
    for name, data in scenarios.items():
        path = OUT / name
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(f"wrote {path} ({len(data['steps'])} step entries)")
    spec_path = OUT / "ablation-spec.json"
    spec_path.write_text(
        json.dumps(ablation_spec(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {spec_path}")


if __name__ == "__main__":
    main()
