"""Read-only workspace summarizer and the deficit feature map.

A workspace is a directory tree holding theory notes, a forest of small
repositories, a paper, evidence artifacts, and an obligations list. The
summarizer walks that tree and produces a plain-data snapshot; it never
writes, and summarizing the same tree twice yields byte-identical
serialized output. Scoring consumes the snapshot through
:func:`extract_features`, which turns observed sizes into deficits in
[0, 1] against configured targets.

File conventions (documented here because the summarizer defines them):

* theory: ``THEORY.md`` at the workspace root or at a repo root.
* utility hypothesis: ``UTILITY.md`` at the workspace root.
* paper: any ``*.tex`` under ``paper/`` at the workspace root.
* READMEs: ``README.md`` at the workspace root and at each repo root.
* repos: first-level directories holding a build manifest or README,
  excluding ``paper/``, benchmark directories, and dotted directories.
* benchmarks: files under a ``benchmarks/`` or ``bench/`` directory, or
  named ``bench_*.*`` / ``*_bench.*``.
* grounding ledger: ``grounding.json`` at the workspace root.
* test report: ``test-report.json`` at the workspace root with integer
  fields ``passed`` and ``failed``.
* build status: ``.cesm/build-status.json`` mapping repo path to bool;
  a repo is installable when it has a manifest and a true record here.
* obligations: non-heading, non-empty lines of ``OBLIGATIONS.md``.
"""
from __future__ import annotations

import hashlib
import re
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

from .jsonio import canonical_dumps, read_json
from .ledger import Ledger, LedgerError, scan_public_literals
from .obligations import AXES, ObligationVector

__all__ = [
    "TheorySurface",
    "RepoInfo",
    "RepoSurface",
    "PublicSurface",
    "EvidenceSurface",
    "WorkspaceSummary",
    "DeficitTargets",
    "FeatureVector",
    "FEATURE_NAMES",
    "summarize_workspace",
    "extract_features",
    "prompt_substitutions",
]

_MANIFEST_NAMES = (
    "pyproject.toml",
    "setup.py",
    "setup.cfg",
    "Cargo.toml",
    "package.json",
    "go.mod",
    "CMakeLists.txt",
    "Makefile",
)

_SOURCE_SUFFIXES = {
    ".py", ".rs", ".c", ".h", ".cpp", ".hpp", ".js", ".ts", ".go", ".sh",
    ".jl", ".r", ".sql",
}

_RESERVED_TOP_DIRS = {"paper", "benchmarks", "bench"}

_BENCH_NAME = re.compile(r"(^bench_.+|.+_bench)\.[A-Za-z0-9]+$")

_STEP_MESSAGE = re.compile(r"^step=(\d+) symbol=\S+$")


@dataclass(frozen=True)
class TheorySurface:
    present: bool
    doc_paths: tuple[str, ...]
    word_count: int
    revision_count: int


@dataclass(frozen=True)
class RepoInfo:
    root: str
    loc: int
    test_file_count: int
    has_readme: bool
    installable: bool


@dataclass(frozen=True)
class RepoSurface:
    repos: tuple[RepoInfo, ...]

    @property
    def total_loc(self) -> int:
        return sum(r.loc for r in self.repos)

    @property
    def total_test_files(self) -> int:
        return sum(r.test_file_count for r in self.repos)


@dataclass(frozen=True)
class PublicSurface:
    paper_paths: tuple[str, ...]
    readme_paths: tuple[str, ...]
    paper_word_count: int
    readme_word_count: int
    last_modified_step: int


@dataclass(frozen=True)
class EvidenceSurface:
    benchmark_count: int
    ledger_path: Optional[str]
    grounded_claim_ratio: float
    test_pass_ratio: float


@dataclass(frozen=True)
class WorkspaceSummary:
    """Plain-data snapshot of one workspace at one controller step."""

    theory: TheorySurface
    repos: RepoSurface
    public: PublicSurface
    evidence: EvidenceSurface
    utility_present: bool
    utility_text: str
    open_obligations: tuple[str, ...]
    snapshot_step: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "theory": {
                "present": self.theory.present,
                "doc_paths": list(self.theory.doc_paths),
                "word_count": self.theory.word_count,
                "revision_count": self.theory.revision_count,
            },
            "repos": [
                {
                    "root": r.root,
                    "loc": r.loc,
                    "test_file_count": r.test_file_count,
                    "has_readme": r.has_readme,
                    "installable": r.installable,
                }
                for r in self.repos.repos
            ],
            "public": {
                "paper_paths": list(self.public.paper_paths),
                "readme_paths": list(self.public.readme_paths),
                "paper_word_count": self.public.paper_word_count,
                "readme_word_count": self.public.readme_word_count,
                "last_modified_step": self.public.last_modified_step,
            },
            "evidence": {
                "benchmark_count": self.evidence.benchmark_count,
                "ledger_path": self.evidence.ledger_path,
                "grounded_claim_ratio": self.evidence.grounded_claim_ratio,
                "test_pass_ratio": self.evidence.test_pass_ratio,
            },
            "utility_present": self.utility_present,
            "utility_text": self.utility_text,
            "open_obligations": list(self.open_obligations),
            "snapshot_step": self.snapshot_step,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "WorkspaceSummary":
        return cls(
            theory=TheorySurface(
                present=d["theory"]["present"],
                doc_paths=tuple(d["theory"]["doc_paths"]),
                word_count=d["theory"]["word_count"],
                revision_count=d["theory"]["revision_count"],
            ),
            repos=RepoSurface(
                repos=tuple(RepoInfo(**r) for r in d["repos"])
            ),
            public=PublicSurface(
                paper_paths=tuple(d["public"]["paper_paths"]),
                readme_paths=tuple(d["public"]["readme_paths"]),
                paper_word_count=d["public"]["paper_word_count"],
                readme_word_count=d["public"]["readme_word_count"],
                last_modified_step=d["public"]["last_modified_step"],
            ),
            evidence=EvidenceSurface(
                benchmark_count=d["evidence"]["benchmark_count"],
                ledger_path=d["evidence"]["ledger_path"],
                grounded_claim_ratio=d["evidence"]["grounded_claim_ratio"],
                test_pass_ratio=d["evidence"]["test_pass_ratio"],
            ),
            utility_present=d["utility_present"],
            utility_text=d["utility_text"],
            open_obligations=tuple(d["open_obligations"]),
            snapshot_step=d["snapshot_step"],
        )

    def digest(self) -> str:
        return hashlib.sha256(canonical_dumps(self.to_dict()).encode()).hexdigest()


def _word_count(path: Path) -> int:
    try:
        return len(path.read_text(encoding="utf-8", errors="replace").split())
    except OSError:
        return 0


def _git_output(root: Path, *args: str) -> Optional[str]:
    """Run a read-only git query; None when git or history is missing."""
    if not (root / ".git").exists():
        return None
    try:
        proc = subprocess.run(
            ["git", "-C", str(root), *args],
            capture_output=True,
            text=True,
            timeout=30,
        )
    except (OSError, subprocess.TimeoutExpired):
        return None
    if proc.returncode != 0:
        return None
    return proc.stdout.strip()


def _theory_revision_count(root: Path, doc_paths: tuple[str, ...]) -> int:
    if not doc_paths:
        return 0
    out = _git_output(root, "rev-list", "--count", "HEAD", "--", *doc_paths)
    if out is None:
        return 0
    try:
        return int(out)
    except ValueError:
        return 0


def _last_modified_step(root: Path, public_paths: tuple[str, ...]) -> int:
    """Step recorded in the newest bookkeeping commit touching public files."""
    if not public_paths:
        return 0
    out = _git_output(root, "log", "-n", "1", "--format=%s", "--", *public_paths)
    if not out:
        return 0
    match = _STEP_MESSAGE.match(out.splitlines()[0])
    return int(match.group(1)) if match else 0


def _iter_files(base: Path) -> list[Path]:
    found: list[Path] = []
    for path in sorted(base.rglob("*")):
        if path.is_symlink() or not path.is_file():
            continue
        if any(part.startswith(".") for part in path.relative_to(base).parts):
            continue
        found.append(path)
    return found


def _count_loc(repo: Path) -> tuple[int, int]:
    loc = 0
    test_files = 0
    for path in _iter_files(repo):
        rel = path.relative_to(repo)
        if path.suffix.lower() in _SOURCE_SUFFIXES:
            try:
                loc += len(path.read_text(encoding="utf-8", errors="replace").splitlines())
            except OSError:
                continue
            name = path.name
            in_tests_dir = "tests" in rel.parts[:-1]
            if name.startswith("test_") or path.stem.endswith("_test") or in_tests_dir:
                test_files += 1
    return loc, test_files


def _load_build_status(root: Path) -> dict[str, bool]:
    path = root / ".cesm" / "build-status.json"
    if not path.is_file():
        return {}
    try:
        data = read_json(path)
    except (OSError, ValueError):
        return {}
    if not isinstance(data, dict):
        return {}
    return {str(k): bool(v) for k, v in data.items()}


def _find_repos(root: Path, build_status: dict[str, bool]) -> RepoSurface:
    repos: list[RepoInfo] = []
    for child in sorted(root.iterdir()):
        if not child.is_dir() or child.is_symlink():
            continue
        if child.name.startswith(".") or child.name in _RESERVED_TOP_DIRS:
            continue
        has_manifest = any((child / m).is_file() for m in _MANIFEST_NAMES)
        has_readme = (child / "README.md").is_file()
        if not (has_manifest or has_readme):
            continue
        loc, test_files = _count_loc(child)
        rel = child.name
        repos.append(
            RepoInfo(
                root=rel,
                loc=loc,
                test_file_count=test_files,
                has_readme=has_readme,
                installable=has_manifest and build_status.get(rel, False),
            )
        )
    return RepoSurface(repos=tuple(repos))


def _count_benchmarks(root: Path) -> int:
    count = 0
    for path in _iter_files(root):
        rel = path.relative_to(root)
        if any(part in ("benchmarks", "bench") for part in rel.parts[:-1]):
            count += 1
        elif _BENCH_NAME.match(path.name):
            count += 1
    return count


def _grounding_ratio(root: Path, ledger_path: Optional[Path]) -> float:
    """Fraction of public numeric literals covered by a grounded claim.

    Zero when there is no ledger, no claims, or no public literals at all;
    the ratio is per literal, so one claim spanning many numbers counts
    each of them.
    """
    literals = scan_public_literals(root)
    if not literals or ledger_path is None:
        return 0.0
    try:
        ledger = Ledger.load(ledger_path)
    except (LedgerError, OSError):
        return 0.0
    covered = 0
    spans = [
        (c.source_file, c.line_start, c.line_end)
        for c in ledger.claims
        if c.status == "grounded"
    ]
    for lit in literals:
        if any(
            lit.file == f and start <= lit.line <= end for f, start, end in spans
        ):
            covered += 1
    return covered / len(literals)


def _test_pass_ratio(root: Path) -> float:
    path = root / "test-report.json"
    if not path.is_file():
        return 0.0
    try:
        data = read_json(path)
        passed = int(data["passed"])
        failed = int(data["failed"])
    except (OSError, ValueError, KeyError, TypeError):
        return 0.0
    total = passed + failed
    return passed / total if total > 0 else 0.0


def _open_obligations(root: Path) -> tuple[str, ...]:
    path = root / "OBLIGATIONS.md"
    if not path.is_file():
        return ()
    lines: list[str] = []
    for raw in path.read_text(encoding="utf-8", errors="replace").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        lines.append(line.lstrip("-* ").strip())
    return tuple(lines)


def summarize_workspace(root: Path | str, step: int) -> WorkspaceSummary:
    """Summarize the tree at ``root`` as of controller step ``step``.

    Args:
        root: workspace directory (must exist; an empty directory is a
            valid, all-zero workspace).
        step: value recorded as ``snapshot_step``.

    Returns:
        A :class:`WorkspaceSummary` built purely from disk state. Also
        consults git history (read-only) for theory revision counts and
        the last public-change step; both are 0 without git history.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"workspace root {root} is not a directory")

    theory_paths = tuple(
        sorted(
            str(p.relative_to(root))
            for p in [root / "THEORY.md", *root.glob("*/THEORY.md")]
            if p.is_file()
            and not any(part.startswith(".") for part in p.relative_to(root).parts)
        )
    )
    theory_words = sum(_word_count(root / p) for p in theory_paths)
    theory = TheorySurface(
        present=bool(theory_paths),
        doc_paths=theory_paths,
        word_count=theory_words,
        revision_count=_theory_revision_count(root, theory_paths),
    )

    build_status = _load_build_status(root)
    repos = _find_repos(root, build_status)

    paper_dir = root / "paper"
    paper_paths = tuple(
        sorted(
            str(p.relative_to(root))
            for p in (paper_dir.rglob("*.tex") if paper_dir.is_dir() else [])
            if p.is_file()
            and not any(part.startswith(".") for part in p.relative_to(root).parts)
        )
    )
    readme_candidates = [root / "README.md", *root.glob("*/README.md")]
    readme_paths = tuple(
        sorted(
            str(p.relative_to(root))
            for p in readme_candidates
            if p.is_file()
            and p.relative_to(root).parts[0] not in _RESERVED_TOP_DIRS
            and not p.relative_to(root).parts[0].startswith(".")
        )
    )
    public = PublicSurface(
        paper_paths=paper_paths,
        readme_paths=readme_paths,
        paper_word_count=sum(_word_count(root / p) for p in paper_paths),
        readme_word_count=sum(_word_count(root / p) for p in readme_paths),
        last_modified_step=_last_modified_step(root, paper_paths + readme_paths),
    )

    ledger_file = root / "grounding.json"
    ledger_path = str(ledger_file.relative_to(root)) if ledger_file.is_file() else None
    evidence = EvidenceSurface(
        benchmark_count=_count_benchmarks(root),
        ledger_path=ledger_path,
        grounded_claim_ratio=_grounding_ratio(
            root, ledger_file if ledger_path else None
        ),
        test_pass_ratio=_test_pass_ratio(root),
    )

    utility_file = root / "UTILITY.md"
    utility_present = utility_file.is_file()
    utility_text = (
        utility_file.read_text(encoding="utf-8", errors="replace").strip()
        if utility_present
        else ""
    )

    return WorkspaceSummary(
        theory=theory,
        repos=repos,
        public=public,
        evidence=evidence,
        utility_present=utility_present,
        utility_text=utility_text,
        open_obligations=_open_obligations(root),
        snapshot_step=step,
    )


# --- deficit features ---------------------------------------------------

DEFICIT_NAMES: tuple[str, ...] = (
    "theory_deficit",
    "code_deficit",
    "paper_deficit",
    "readme_deficit",
    "benchmark_deficit",
    "grounding_deficit",
    "test_deficit",
)

FEATURE_NAMES: tuple[str, ...] = DEFICIT_NAMES + AXES


@dataclass(frozen=True)
class DeficitTargets:
    """Positive targets that anchor each deficit; validated on construction."""

    theory_words: float = 500.0
    loc: float = 2000.0
    paper_words: float = 1500.0
    readme_words: float = 300.0
    benchmark_count: float = 3.0
    grounding_ratio: float = 0.9
    test_pass_ratio: float = 1.0

    def __post_init__(self) -> None:
        for name, value in self.as_dict().items():
            if value <= 0.0:
                raise ValueError(f"deficit target {name} must be > 0, got {value!r}")

    def as_dict(self) -> dict[str, float]:
        return {
            "theory_words": self.theory_words,
            "loc": self.loc,
            "paper_words": self.paper_words,
            "readme_words": self.readme_words,
            "benchmark_count": self.benchmark_count,
            "grounding_ratio": self.grounding_ratio,
            "test_pass_ratio": self.test_pass_ratio,
        }


@dataclass(frozen=True)
class FeatureVector:
    """Twelve named reals: seven deficits in [0, 1], five obligation axes."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(FEATURE_NAMES):
            raise ValueError(
                f"feature vector needs {len(FEATURE_NAMES)} values, got {len(self.values)}"
            )

    def __getitem__(self, name: str) -> float:
        try:
            return self.values[FEATURE_NAMES.index(name)]
        except ValueError:
            raise KeyError(f"unknown feature: {name!r}") from None

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.values))

    @classmethod
    def from_dict(cls, d: Mapping[str, float]) -> "FeatureVector":
        return cls(values=tuple(float(d[name]) for name in FEATURE_NAMES))


def _deficit(observed: float, target: float) -> float:
    return min(1.0, max(0.0, 1.0 - observed / target))


def extract_features(
    w: WorkspaceSummary, o: ObligationVector, targets: DeficitTargets
) -> FeatureVector:
    """Map a summary and obligation vector to the 12-dim feature vector.

    Each deficit is max(0, 1 - observed/target) clamped to [0, 1]; the five
    obligation components are passed through unchanged (nonnegative but
    not clamped to 1).
    """
    deficits = (
        _deficit(w.theory.word_count, targets.theory_words),
        _deficit(w.repos.total_loc, targets.loc),
        _deficit(w.public.paper_word_count, targets.paper_words),
        _deficit(w.public.readme_word_count, targets.readme_words),
        _deficit(w.evidence.benchmark_count, targets.benchmark_count),
        _deficit(w.evidence.grounded_claim_ratio, targets.grounding_ratio),
        _deficit(w.evidence.test_pass_ratio, targets.test_pass_ratio),
    )
    return FeatureVector(values=deficits + o.as_tuple())


def prompt_substitutions(w: WorkspaceSummary) -> dict[str, str]:
    """Placeholder values offered to prompt templates."""
    obligations = "; ".join(w.open_obligations) if w.open_obligations else "none"
    return {
        "step": str(w.snapshot_step),
        "repo_count": str(len(w.repos.repos)),
        "total_loc": str(w.repos.total_loc),
        "test_file_count": str(w.repos.total_test_files),
        "paper_word_count": str(w.public.paper_word_count),
        "readme_word_count": str(w.public.readme_word_count),
        "benchmark_count": str(w.evidence.benchmark_count),
        "grounding_ratio": f"{w.evidence.grounded_claim_ratio:.3f}",
        "test_pass_ratio": f"{w.evidence.test_pass_ratio:.3f}",
        "theory_present": "yes" if w.theory.present else "no",
        "utility_present": "yes" if w.utility_present else "no",
        "open_obligations": obligations,
    }
