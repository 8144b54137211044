"""Independent re-implementation of the selection laws, used as the oracle
for frozen scenario traces.

Everything here is written against the documented behavior, on purpose
without importing the package under test: an in-memory file model, flat
dict state, and one big step loop. If the package and this simulator
disagree on any decision, one of them misread the rules; frozen golden
traces are only minted while they agree.

Limits: mock executor runs only (real subprocesses are out of scope for
golden traces), and git-derived summary fields are not modeled because no
decision depends on them.
"""
from __future__ import annotations

import json
import re

# Alphabet order is load-bearing: ties break toward the smaller index.
SIM_ALPHABET = (
    ("Ideation", "seed", False),
    ("TheoryCreation", "seed", False),
    ("SeedGeneration", "generate", True),
    ("SeedUpgrade", "generate", True),
    ("PaperStrengthening", "harden", False),
    ("READMEVerification", "harden", False),
    ("BenchmarkTightening", "harden", False),
    ("GroundingCreation", "harden", False),
    ("SkepticalAudit", "harden", False),
    ("PaperRewrite", "harden", False),
    ("ClaimCleanup", "harden", False),
    ("PortfolioExpansion", "harden", True),
    ("BenchmarkSearch", "harden", False),
    ("FinalGroundingAudit", "tail", False),
    ("Critique", "tail", False),
    ("ResponseToCritique", "tail", False),
    ("AcademicPaperPolish", "tail", False),
)
SIM_INDEX = {name: i for i, (name, _, _) in enumerate(SIM_ALPHABET)}
SIM_PHASE = {name: phase for name, phase, _ in SIM_ALPHABET}
SIM_EXPANSIVE = {name for name, _, exp in SIM_ALPHABET if exp}

SIM_FOLLOW_UPS = ("GroundingCreation", "SkepticalAudit")
SIM_SUPPRESSED = {"GroundingCreation", "SkepticalAudit", "FinalGroundingAudit"}

SIM_TAIL = (
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

SIM_FEATURES = (
    "theory_deficit",
    "code_deficit",
    "paper_deficit",
    "readme_deficit",
    "benchmark_deficit",
    "grounding_deficit",
    "test_deficit",
    "ground",
    "audit",
    "bench",
    "paper_sync",
    "readme_sync",
)

SIM_TARGETS = {
    "theory_words": 500.0,
    "loc": 2000.0,
    "paper_words": 1500.0,
    "readme_words": 300.0,
    "benchmark_count": 3.0,
    "grounding_ratio": 0.9,
    "test_pass_ratio": 1.0,
}

SIM_WEIGHTS = {
    "PaperStrengthening": {"paper_deficit": 1.0, "paper_sync": 2.0},
    "READMEVerification": {"readme_deficit": 1.0, "readme_sync": 2.0},
    "BenchmarkTightening": {"benchmark_deficit": 1.0, "bench": 2.0},
    "GroundingCreation": {"grounding_deficit": 1.0, "ground": 2.0},
    "SkepticalAudit": {"grounding_deficit": 1.0, "audit": 2.0},
    "PaperRewrite": {"paper_deficit": 1.0, "paper_sync": 2.0},
    "ClaimCleanup": {"paper_deficit": 1.0, "paper_sync": 2.0},
    "PortfolioExpansion": {"code_deficit": 1.0},
    "BenchmarkSearch": {"benchmark_deficit": 1.0, "bench": 2.0},
    "SeedGeneration": {"code_deficit": 1.5},
    "SeedUpgrade": {"code_deficit": 1.5},
}

SIM_DECAY = 2.0 ** (-1.0 / 8.0)
SIM_PUSH_EXPANSIVE = (1.0, 1.0, 0.5, 0.0, 0.0)
SIM_PUSH_PAPER = (0.0, 0.0, 0.0, 1.0, 0.0)
SIM_PUSH_README = (0.0, 0.0, 0.0, 0.0, 1.0)

_MANIFESTS = (
    "pyproject.toml", "setup.py", "setup.cfg", "Cargo.toml",
    "package.json", "go.mod", "CMakeLists.txt", "Makefile",
)
_SRC_EXT = {
    ".py", ".rs", ".c", ".h", ".cpp", ".hpp", ".js", ".ts", ".go",
    ".sh", ".jl", ".r", ".sql",
}
_RESERVED = {"paper", "benchmarks", "bench"}
_LIT = re.compile(r"\d+\.\d+%?|\d+%")
_FENCE = re.compile(r"^\s*```")
_BENCHNAME = re.compile(r"(^bench_.+|.+_bench)\.[A-Za-z0-9]+$")
_JUDGE_WORD = re.compile(r"[a-z0-9]{4,}")
_VAGUE = ("tbd", "todo", "???", "placeholder", "etc.")


# --- file model helpers -----------------------------------------------------

def _parts(path):
    return path.split("/")


def _hidden(path):
    return any(p.startswith(".") for p in _parts(path))


def _visible(files):
    return {p: c for p, c in files.items() if not _hidden(p)}


def _suffix(path):
    name = _parts(path)[-1]
    dot = name.rfind(".")
    return name[dot:].lower() if dot > 0 else ""


def _words(text):
    return len(text.split())


def _tracked_public(path):
    if _hidden(path):
        return False
    parts = _parts(path)
    if path == "README.md":
        return True
    if len(parts) == 2 and parts[1] == "README.md":
        return True
    return parts[0] == "paper" and _suffix(path) == ".tex"


def _literal_positions(files):
    """(file, line) of every numeric literal in public files, fences skipped."""
    vis = _visible(files)
    targets = ["README.md"]
    targets += sorted(
        p for p in vis if len(_parts(p)) == 2 and _parts(p)[1] == "README.md"
    )
    targets += sorted(
        p for p in vis if _parts(p)[0] == "paper" and _suffix(p) == ".tex"
    )
    out = []
    for path in targets:
        if path not in vis:
            continue
        fence = False
        for lineno, line in enumerate(vis[path].splitlines(), start=1):
            if _FENCE.match(line):
                fence = not fence
                continue
            if fence:
                continue
            for _ in _LIT.finditer(line):
                out.append((path, lineno))
    return out


def _grounded_spans(files):
    raw = files.get("grounding.json")
    if raw is None:
        return None
    try:
        data = json.loads(raw)
        claims = data["claims"]
    except (ValueError, KeyError, TypeError):
        return None
    spans = []
    for c in claims:
        if c.get("status") == "grounded":
            spans.append((c["source_file"], c["line_start"], c["line_end"]))
    return spans


def _summarize(files, ledger_off):
    vis = _visible(files)

    theory_words = 0
    theory_present = False
    for p, text in vis.items():
        parts = _parts(p)
        if p == "THEORY.md" or (len(parts) == 2 and parts[1] == "THEORY.md"):
            theory_present = True
            theory_words += _words(text)

    build_raw = files.get(".cesm/build-status.json", "{}")
    try:
        build = json.loads(build_raw)
    except ValueError:
        build = {}
    top_dirs = sorted(
        {_parts(p)[0] for p in vis if len(_parts(p)) > 1}
        - _RESERVED
    )
    repos = []
    total_loc = 0
    for d in top_dirs:
        has_manifest = any(f"{d}/{m}" in vis for m in _MANIFESTS)
        has_readme = f"{d}/README.md" in vis
        if not (has_manifest or has_readme):
            continue
        loc = 0
        for p, text in vis.items():
            if _parts(p)[0] == d and len(_parts(p)) > 1 and _suffix(p) in _SRC_EXT:
                loc += len(text.splitlines())
        total_loc += loc
        repos.append(
            {
                "name": d,
                "has_readme": has_readme,
                "installable": has_manifest and bool(build.get(d, False)),
            }
        )

    paper_words = sum(
        _words(t) for p, t in vis.items()
        if _parts(p)[0] == "paper" and _suffix(p) == ".tex"
    )
    paper_present = any(
        _parts(p)[0] == "paper" and _suffix(p) == ".tex" for p in vis
    )
    readme_words = 0
    for p, t in vis.items():
        parts = _parts(p)
        if p == "README.md":
            readme_words += _words(t)
        elif (
            len(parts) == 2
            and parts[1] == "README.md"
            and parts[0] not in _RESERVED
        ):
            readme_words += _words(t)

    bench_count = 0
    for p in vis:
        parts = _parts(p)
        if any(x in ("benchmarks", "bench") for x in parts[:-1]):
            bench_count += 1
        elif _BENCHNAME.match(parts[-1]):
            bench_count += 1

    if ledger_off:
        ratio = 0.0
    else:
        lits = _literal_positions(files)
        spans = _grounded_spans(files)
        if not lits or spans is None:
            ratio = 0.0
        else:
            covered = sum(
                1
                for f, line in lits
                if any(f == sf and a <= line <= b for sf, a, b in spans)
            )
            ratio = covered / len(lits)

    report_raw = files.get("test-report.json")
    test_ratio = 0.0
    if report_raw is not None:
        try:
            rep = json.loads(report_raw)
            total = int(rep["passed"]) + int(rep["failed"])
            test_ratio = int(rep["passed"]) / total if total else 0.0
        except (ValueError, KeyError, TypeError):
            test_ratio = 0.0

    return {
        "theory_present": theory_present,
        "theory_words": theory_words,
        "repos": repos,
        "total_loc": total_loc,
        "paper_present": paper_present,
        "paper_words": paper_words,
        "readme_words": readme_words,
        "bench_count": bench_count,
        "grounding_ratio": ratio,
        "test_ratio": test_ratio,
        "utility_present": "UTILITY.md" in vis,
    }


def _deficit(obs, target):
    d = 1.0 - obs / target
    if d < 0.0:
        return 0.0
    return min(1.0, d)


def _features(summary, obligations, targets):
    return {
        "theory_deficit": _deficit(summary["theory_words"], targets["theory_words"]),
        "code_deficit": _deficit(summary["total_loc"], targets["loc"]),
        "paper_deficit": _deficit(summary["paper_words"], targets["paper_words"]),
        "readme_deficit": _deficit(summary["readme_words"], targets["readme_words"]),
        "benchmark_deficit": _deficit(
            summary["bench_count"], targets["benchmark_count"]
        ),
        "grounding_deficit": _deficit(
            summary["grounding_ratio"], targets["grounding_ratio"]
        ),
        "test_deficit": _deficit(summary["test_ratio"], targets["test_pass_ratio"]),
        "ground": obligations[0],
        "audit": obligations[1],
        "bench": obligations[2],
        "paper_sync": obligations[3],
        "readme_sync": obligations[4],
    }


def _score(name, feats, history, weights, biases, rho, window):
    row = weights.get(name, {})
    total = 0.0
    for f in SIM_FEATURES:
        w = row.get(f, 0.0)
        if w:
            total += w * feats[f]
    total += biases.get(name, 0.0)
    if rho and window > 0:
        total -= rho * (history.count(name) / window)
    return total


def _admissible(mode, queue, budget, tail_progress, feats, tail, switches, guards):
    if queue:
        return [queue[0]]
    if budget <= len(tail) or mode == "tail":
        if tail_progress >= len(tail):
            return []
        return [tail[tail_progress]]
    allowed = [n for n, _, _ in SIM_ALPHABET if SIM_PHASE[n] == mode]
    if mode == "harden" and feats["code_deficit"] > guards["loc_low_threshold"]:
        allowed += [n for n, _, _ in SIM_ALPHABET if SIM_PHASE[n] == "generate"]
    allowed.sort(key=lambda n: SIM_INDEX[n])
    if switches.get("adjacency_off"):
        allowed = [n for n in allowed if n != "PortfolioExpansion"]
    if switches.get("benchmark_judge_off"):
        allowed = [n for n in allowed if n != "BenchmarkSearch"]
    return allowed


def _gate(files):
    """Five-rule check against the staged proposal; consumes it either way.

    Returns (passed, rules) where rules maps rule name to bool.
    """
    raw = files.pop("expansion.json", None)
    if raw is None:
        return False, None
    try:
        prop = json.loads(raw)
        pivot = str(prop["pivot"])
        instance = str(prop["concrete_instance"])
        cap_ref = str(prop["preserved_capability"]["ref"])
        evidence = str(prop["strengthened_evidence"])
        support = str(prop["claim_support"])
    except (ValueError, KeyError, TypeError):
        return False, None

    rules = {}
    rules["preserves_capability"] = cap_ref in files

    context_parts = []
    if "THEORY.md" in files:
        context_parts.append(files["THEORY.md"])
    if "UTILITY.md" in files:
        context_parts.append(files["UTILITY.md"])
    context = "\n".join(context_parts)
    pivot_words = set(_JUDGE_WORD.findall(pivot.lower()))
    ctx_words = set(_JUDGE_WORD.findall(context.lower()))
    sentences = [s for s in re.split(r"[.!?]+", pivot) if s.strip()]
    rules["single_step"] = len(pivot_words & ctx_words) >= 2 and len(sentences) <= 3
    low = instance.strip().lower()
    rules["concrete_instance"] = len(instance.split()) >= 8 and not any(
        v in low for v in _VAGUE
    )

    rules["strengthens_evidence"] = evidence in files

    backed = False
    ledger_raw = files.get("grounding.json")
    if ledger_raw is not None:
        try:
            claims = json.loads(ledger_raw)["claims"]
            backed = any(c.get("id") == support for c in claims)
        except (ValueError, KeyError, TypeError):
            backed = False
    if not backed:
        backed = support in files and any(
            part in ("benchmarks", "bench") for part in _parts(support)
        )
    rules["claim_backed"] = backed

    return all(rules.values()), rules


def _apply_effects(files, script, step, selected, skip_tags):
    """Mutate the file model per the script; returns (outcome, markers)."""
    if step > script["max_steps"]:
        raise RuntimeError(f"script exhausted at step {step}")
    outcome = "succeeded"
    markers = []
    for entry in script.get("steps", []):
        if entry["step"] != step:
            continue
        if entry.get("only_if_symbol") not in (None, selected):
            continue
        outcome = entry.get("outcome", "succeeded")
        markers.extend(entry.get("markers", []))
        for eff in entry.get("effects", []):
            if skip_tags and set(eff.get("tags", [])) & set(skip_tags):
                continue
            op = eff["op"]
            path = eff["path"]
            if op == "write":
                files[path] = eff.get("content", "")
            elif op == "append":
                files[path] = files.get(path, "") + eff.get("content", "")
            elif op == "delete":
                files.pop(path, None)
            elif op == "mkdir":
                pass
            else:
                raise RuntimeError(f"unknown op {op}")
    return outcome, markers


def _merge_queue(injected, follow_ups, rest):
    head = (
        list(injected)
        if list(injected) == list(follow_ups)
        else list(injected) + list(follow_ups)
    )
    merged = []
    for sid in head + list(rest):
        if merged and merged[-1] == sid:
            continue
        merged.append(sid)
    return merged


def _next_mode(mode, summary, budget, tail_progress, tail_len, guards):
    if budget <= 0 or tail_progress >= tail_len:
        return "halt"
    if mode == "seed":
        if summary["theory_present"] and summary["utility_present"]:
            return "generate"
        return "seed"
    if mode == "generate":
        ready = sum(
            1 for r in summary["repos"] if r["installable"] and r["has_readme"]
        )
        if ready >= guards["min_repos"] and summary["paper_present"]:
            return "harden"
        return "generate"
    if mode == "harden":
        return "tail" if budget <= tail_len else "harden"
    return mode


def simulate(
    script,
    budget,
    weights=None,
    biases=None,
    rho=0.5,
    window=6,
    targets=None,
    tail=SIM_TAIL,
    decay=SIM_DECAY,
    guards=None,
    switches=None,
):
    """Run the mock scenario through the selection laws.

    Returns one dict per executed step with the decision-relevant fields;
    workspace starts empty, as the orchestrator's temp runs do.
    """
    weights = weights if weights is not None else SIM_WEIGHTS
    biases = biases if biases is not None else {}
    targets = targets if targets is not None else SIM_TARGETS
    guards = guards if guards is not None else {"min_repos": 1, "loc_low_threshold": 0.7}
    switches = switches if switches is not None else {}
    if switches.get("decay_off"):
        decay = 1.0
    skip_tags = ("paper_skeleton",) if switches.get("paper_first_off") else ()

    files: dict[str, str] = {}
    mode = "seed"
    obligations = [0.0] * 5
    queue: list[str] = []
    history: list[str] = []
    tail_progress = 0
    budget_remaining = budget
    step = 0
    out = []
    if budget == 0:
        mode = "halt"

    while mode != "halt" and budget_remaining > 0:
        summary = _summarize(files, switches.get("ledger_off", False))
        feats = _features(summary, obligations, targets)
        adm = _admissible(
            mode, queue, budget_remaining, tail_progress, feats, tail, switches, guards
        )
        if not adm:
            raise RuntimeError("empty admissible set before halt edge")
        scores = {
            name: _score(name, feats, history, weights, biases, rho, window)
            for name, _, _ in SIM_ALPHABET
        }
        selected = min(adm, key=lambda n: (-scores[n], SIM_INDEX[n]))
        from_forced = bool(queue) and queue[0] == selected
        from_tail = not from_forced and (
            mode == "tail" or budget_remaining <= len(tail)
        )

        gate_rejected = False
        if selected in SIM_EXPANSIVE and not switches.get("adjacency_off"):
            passed, _rules = _gate(files)
            gate_rejected = not passed

        pre_tracked = {
            p: c for p, c in files.items() if _tracked_public(p)
        }
        outcome = "gate_rejected"
        markers: list[str] = []
        if not gate_rejected:
            outcome, markers = _apply_effects(
                files, script, step, selected, skip_tags
            )
        post_tracked = {p: c for p, c in files.items() if _tracked_public(p)}

        if gate_rejected or switches.get("trigger_off"):
            changed = []
        else:
            added_or_removed = set(pre_tracked) ^ set(post_tracked)
            modified = {
                p
                for p in set(pre_tracked) & set(post_tracked)
                if pre_tracked[p] != post_tracked[p]
            }
            changed = sorted(added_or_removed | modified)
        public_change = bool(changed)
        paper_changed = any(_suffix(p) == ".tex" for p in changed)
        readme_changed = any(_parts(p)[-1] == "README.md" for p in changed)

        injected = []
        if (
            not switches.get("trigger_off")
            and public_change
            and selected not in SIM_SUPPRESSED
        ):
            injected = list(SIM_FOLLOW_UPS)
        follow_ups = (
            list(SIM_FOLLOW_UPS)
            if selected in SIM_EXPANSIVE and not gate_rejected
            else []
        )
        rest = queue[1:] if from_forced else queue[:]
        queue = _merge_queue(injected, follow_ups, rest)

        push = [0.0] * 5
        if not gate_rejected and selected in SIM_EXPANSIVE:
            push = list(SIM_PUSH_EXPANSIVE)
        if paper_changed:
            push = [a + b for a, b in zip(push, SIM_PUSH_PAPER)]
        if readme_changed:
            push = [a + b for a, b in zip(push, SIM_PUSH_README)]
        obligations = [decay * o + p for o, p in zip(obligations, push)]

        history = (history + [selected])[-window:]
        budget_remaining -= 1
        if from_tail:
            tail_progress += 1
        new_summary = _summarize(files, switches.get("ledger_off", False))
        mode = _next_mode(
            mode, new_summary, budget_remaining, tail_progress, len(tail), guards
        )

        out.append(
            {
                "step": step,
                "selected": selected,
                "admissible": adm,
                "scores": scores,
                "outcome": outcome,
                "markers": markers,
                "from_forced": from_forced,
                "from_tail": from_tail,
                "injected": injected,
                "follow_ups": follow_ups,
                "queue_post": queue[:],
                "obligations_post": obligations[:],
                "pressure_post": sum(obligations),
                "mode_post": mode,
                "budget_post": budget_remaining,
                "features": feats,
            }
        )
        step += 1
    return out
