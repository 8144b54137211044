"""Reactive grounding trigger: watch public files, force the audit pair.

Snapshots hash the content of tracked public files (dirty tree included,
no commit required). When a step's pre/post snapshots differ on any
tracked path and the executed symbol was not itself grounding or audit
work, the controller must run GroundingCreation then SkepticalAudit next.
"""
from __future__ import annotations

import hashlib
import re
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

__all__ = [
    "DEFAULT_TRACKED_PATTERNS",
    "SUPPRESSED_SYMBOLS",
    "TriggerError",
    "GitSnapshot",
    "DiffReport",
    "snapshot",
    "detect_public_diff",
    "forced_injection",
]

DEFAULT_TRACKED_PATTERNS: tuple[str, ...] = (
    "paper/**/*.tex",
    "README.md",
    "*/README.md",
)

# These symbols legitimately edit public text while doing grounding or
# audit work; re-triggering on them would loop forever.
SUPPRESSED_SYMBOLS: frozenset[str] = frozenset(
    {"GroundingCreation", "SkepticalAudit", "FinalGroundingAudit"}
)

INJECTED_PAIR: tuple[str, str] = ("GroundingCreation", "SkepticalAudit")


class TriggerError(RuntimeError):
    pass


def _pattern_regex(pattern: str) -> re.Pattern[str]:
    # Glob over posix relpaths: ** spans directories, * and ? stay inside
    # one segment, "**/" matches zero or more leading directories.
    out = []
    i = 0
    while i < len(pattern):
        if pattern.startswith("**/", i):
            out.append(r"(?:.*/)?")
            i += 3
        elif pattern.startswith("**", i):
            out.append(r".*")
            i += 2
        elif pattern[i] == "*":
            out.append(r"[^/]*")
            i += 1
        elif pattern[i] == "?":
            out.append(r"[^/]")
            i += 1
        else:
            out.append(re.escape(pattern[i]))
            i += 1
    return re.compile("^" + "".join(out) + "$")


def _matches_any(rel: str, regexes: Iterable[re.Pattern[str]]) -> bool:
    return any(rx.match(rel) for rx in regexes)


@dataclass(frozen=True)
class GitSnapshot:
    commit_id: str
    file_hashes: Mapping[str, str]
    patterns: tuple[str, ...]


def _head_commit(root: Path) -> str:
    try:
        proc = subprocess.run(
            ["git", "-C", str(root), "rev-parse", "HEAD"],
            capture_output=True,
            text=True,
            timeout=30,
        )
    except (OSError, subprocess.TimeoutExpired):
        return ""
    return proc.stdout.strip() if proc.returncode == 0 else ""


def snapshot(
    root: Path | str, patterns: Iterable[str] = DEFAULT_TRACKED_PATTERNS
) -> GitSnapshot:
    """Hash every tracked file under a git working tree.

    Raises TriggerError when root is not a git working tree; the run
    orchestrator initializes git up front, so hitting this means a
    misconfigured root.
    """
    root = Path(root)
    if not (root / ".git").exists():
        raise TriggerError(f"{root} is not a git working tree")
    patterns = tuple(patterns)
    regexes = [_pattern_regex(p) for p in patterns]
    hashes: dict[str, str] = {}
    for path in sorted(root.rglob("*")):
        if path.is_symlink() or not path.is_file():
            continue
        rel_parts = path.relative_to(root).parts
        if any(part.startswith(".") for part in rel_parts):
            continue
        rel = "/".join(rel_parts)
        if _matches_any(rel, regexes):
            hashes[rel] = hashlib.sha256(path.read_bytes()).hexdigest()
    return GitSnapshot(
        commit_id=_head_commit(root), file_hashes=hashes, patterns=patterns
    )


@dataclass(frozen=True)
class DiffReport:
    changed_paths: tuple[str, ...]
    public_change: bool
    paper_changed: bool
    readme_changed: bool

    @classmethod
    def empty(cls) -> "DiffReport":
        return cls((), False, False, False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "changed_paths": list(self.changed_paths),
            "public_change": self.public_change,
            "paper_changed": self.paper_changed,
            "readme_changed": self.readme_changed,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DiffReport":
        return cls(
            changed_paths=tuple(d["changed_paths"]),
            public_change=bool(d["public_change"]),
            paper_changed=bool(d["paper_changed"]),
            readme_changed=bool(d["readme_changed"]),
        )


def detect_public_diff(before: GitSnapshot, after: GitSnapshot) -> DiffReport:
    """Changed tracked paths between two snapshots of the same pattern set."""
    if before.patterns != after.patterns:
        raise TriggerError(
            "snapshots track different pattern sets: "
            f"{before.patterns} vs {after.patterns}"
        )
    changed = sorted(
        path
        for path in set(before.file_hashes) | set(after.file_hashes)
        if before.file_hashes.get(path) != after.file_hashes.get(path)
    )
    paper_changed = any(p.endswith(".tex") for p in changed)
    readme_changed = any(p.rsplit("/", 1)[-1] == "README.md" for p in changed)
    return DiffReport(
        changed_paths=tuple(changed),
        public_change=bool(changed),
        paper_changed=paper_changed,
        readme_changed=readme_changed,
    )


def forced_injection(report: DiffReport, executed: str) -> tuple[str, ...]:
    """The (grounding, audit) pair iff a public change needs reacting to."""
    if report.public_change and executed not in SUPPRESSED_SYMBOLS:
        return INJECTED_PAIR
    return ()
