"""Grounding ledger: every public number gets a reproducible origin.

The ledger (grounding.json at the workspace root) binds numeric claims in
the paper and READMEs to the command that reproduces them. The audit
checks three things: the quoted source span still matches what the claim
recorded (else stale), the command still reproduces the expected digest
(else failed; only when command execution is requested), and no public
numeric literal sits outside every claim's span (orphans, reported
ungrounded). The orphan scan is a regex over decimal and percent
literals outside fenced code blocks; integers are deliberately excluded
and the scan over-reports rather than under-reports.
"""
from __future__ import annotations

import hashlib
import re
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

from .jsonio import canonical_dumps, read_json, write_canonical_json

__all__ = [
    "CLAIM_STATUSES",
    "ClaimRecord",
    "Ledger",
    "LedgerError",
    "AuditReport",
    "PublicLiteral",
    "scan_public_literals",
    "audit_claims",
]

CLAIM_STATUSES = ("grounded", "ungrounded", "stale", "failed")

# Decimal literals (1.23) and percentages (12% or 1.5%); bare integers
# are too noisy to track (years, versions, counts in prose).
_LITERAL = re.compile(r"\d+\.\d+%?|\d+%")

_FENCE = re.compile(r"^\s*```")


class LedgerError(ValueError):
    """grounding.json is malformed or violates ledger invariants."""


@dataclass
class ClaimRecord:
    id: str
    text: str
    source_file: str
    line_start: int
    line_end: int
    command: str
    expected_digest: str
    status: str = "ungrounded"
    last_checked_step: int = 0
    source_digest: str = ""

    def validate(self) -> None:
        if not self.id:
            raise LedgerError("claim id must be nonempty")
        if self.status not in CLAIM_STATUSES:
            raise LedgerError(f"claim {self.id}: bad status {self.status!r}")
        if self.line_start < 1 or self.line_end < self.line_start:
            raise LedgerError(f"claim {self.id}: bad line span")
        if self.status == "grounded" and not (self.command and self.expected_digest):
            raise LedgerError(
                f"claim {self.id}: grounded requires command and expected_digest"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "text": self.text,
            "source_file": self.source_file,
            "line_start": self.line_start,
            "line_end": self.line_end,
            "command": self.command,
            "expected_digest": self.expected_digest,
            "status": self.status,
            "last_checked_step": self.last_checked_step,
            "source_digest": self.source_digest,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ClaimRecord":
        try:
            rec = cls(
                id=str(d["id"]),
                text=str(d["text"]),
                source_file=str(d["source_file"]),
                line_start=int(d["line_start"]),
                line_end=int(d["line_end"]),
                command=str(d["command"]),
                expected_digest=str(d["expected_digest"]),
                status=str(d.get("status", "ungrounded")),
                last_checked_step=int(d.get("last_checked_step", 0)),
                # JSON null is a valid spelling for "never digested".
                source_digest=str(d.get("source_digest") or ""),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise LedgerError(f"malformed claim record: {exc}") from exc
        rec.validate()
        return rec


@dataclass
class Ledger:
    claims: list[ClaimRecord] = field(default_factory=list)

    def validate(self) -> None:
        seen: set[str] = set()
        for claim in self.claims:
            claim.validate()
            if claim.id in seen:
                raise LedgerError(f"duplicate claim id: {claim.id}")
            seen.add(claim.id)

    def claim(self, claim_id: str) -> ClaimRecord:
        for c in self.claims:
            if c.id == claim_id:
                return c
        raise KeyError(claim_id)

    def to_dict(self) -> dict[str, Any]:
        # Sorted by id so save() is byte-stable regardless of insert order.
        return {"claims": [c.to_dict() for c in sorted(self.claims, key=lambda c: c.id)]}

    @classmethod
    def load(cls, path: Path | str) -> "Ledger":
        try:
            data = read_json(Path(path))
        except ValueError as exc:
            raise LedgerError(f"grounding ledger is not valid JSON: {exc}") from exc
        if not isinstance(data, dict) or not isinstance(data.get("claims"), list):
            raise LedgerError("grounding ledger must be {\"claims\": [...]}")
        ledger = cls(claims=[ClaimRecord.from_dict(c) for c in data["claims"]])
        ledger.validate()
        return ledger

    def save(self, path: Path | str) -> None:
        self.validate()
        write_canonical_json(Path(path), self.to_dict())

    def canonical_text(self) -> str:
        return canonical_dumps(self.to_dict())


# --- public literal scan --------------------------------------------------

@dataclass(frozen=True)
class PublicLiteral:
    file: str
    line: int
    text: str


def _tracked_public_files(root: Path) -> list[Path]:
    files = [root / "README.md"]
    files.extend(sorted(root.glob("*/README.md")))
    paper = root / "paper"
    if paper.is_dir():
        files.extend(sorted(paper.rglob("*.tex")))
    return [
        f
        for f in files
        if f.is_file()
        and not any(part.startswith(".") for part in f.relative_to(root).parts)
    ]


def scan_public_literals(root: Path | str) -> list[PublicLiteral]:
    """All decimal/percent literals in tracked public files, outside fences."""
    root = Path(root)
    found: list[PublicLiteral] = []
    for path in _tracked_public_files(root):
        rel = str(path.relative_to(root))
        in_fence = False
        text = path.read_text(encoding="utf-8", errors="replace")
        for lineno, line in enumerate(text.splitlines(), start=1):
            if _FENCE.match(line):
                in_fence = not in_fence
                continue
            if in_fence:
                continue
            for match in _LITERAL.finditer(line):
                found.append(PublicLiteral(file=rel, line=lineno, text=match.group()))
    return found


# --- audit ------------------------------------------------------------------

@dataclass
class AuditReport:
    counts: dict[str, int]
    violations: list[dict[str, Any]]
    total_claims: int
    orphan_count: int

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict[str, Any]:
        return {
            "counts": self.counts,
            "violations": self.violations,
            "total_claims": self.total_claims,
            "orphan_count": self.orphan_count,
            "ok": self.ok,
        }


def span_digest(root: Path, claim: ClaimRecord) -> Optional[str]:
    path = root / claim.source_file
    if not path.is_file():
        return None
    lines = path.read_text(encoding="utf-8", errors="replace").splitlines()
    if claim.line_end > len(lines):
        return None
    span = "\n".join(lines[claim.line_start - 1 : claim.line_end])
    return hashlib.sha256(span.encode()).hexdigest()


def _run_claim_command(
    root: Path, claim: ClaimRecord, timeout: float
) -> tuple[str, str]:
    """Returns (new_status, detail) from executing the claim's command."""
    try:
        proc = subprocess.run(
            claim.command,
            shell=True,
            cwd=root,
            capture_output=True,
            timeout=timeout,
        )
    except subprocess.TimeoutExpired:
        return "failed", f"command timed out after {timeout}s"
    if proc.returncode != 0:
        return "failed", f"command exited {proc.returncode}"
    digest = hashlib.sha256(proc.stdout).hexdigest()
    if digest != claim.expected_digest:
        return "failed", f"output digest {digest[:12]}... != expected"
    return "grounded", "reproduced"


def audit_claims(
    ledger: Ledger,
    root: Path | str,
    run_commands: bool = False,
    timeout: float = 30.0,
    step: Optional[int] = None,
) -> AuditReport:
    """Check every claim and scan for orphan public numbers.

    Mutates claim statuses in place. Without run_commands a claim can only
    be demoted (source span changed -> stale); promotion to grounded
    requires reproducing the command output. Orphan literals are counted
    under "ungrounded" so the report's counts sum to claims + orphans.
    """
    root = Path(root)
    violations: list[dict[str, Any]] = []

    for claim in ledger.claims:
        digest = span_digest(root, claim)
        if digest is None:
            claim.status = "stale"
            detail = "source span missing"
        elif claim.source_digest and digest != claim.source_digest:
            claim.status = "stale"
            detail = "source span changed since last check"
        elif run_commands:
            claim.status, detail = _run_claim_command(root, claim, timeout)
            if claim.status == "grounded":
                claim.source_digest = digest
        else:
            detail = "span unchanged (command not executed)"
        if step is not None:
            claim.last_checked_step = step
        if claim.status != "grounded":
            violations.append(
                {
                    "kind": claim.status,
                    "claim_id": claim.id,
                    "file": claim.source_file,
                    "line": claim.line_start,
                    "detail": detail,
                }
            )

    claim_spans = [
        (c.source_file, c.line_start, c.line_end) for c in ledger.claims
    ]
    orphans = [
        lit
        for lit in scan_public_literals(root)
        if not any(
            lit.file == f and start <= lit.line <= end
            for f, start, end in claim_spans
        )
    ]
    for lit in orphans:
        violations.append(
            {
                "kind": "ungrounded",
                "claim_id": None,
                "file": lit.file,
                "line": lit.line,
                "detail": f"orphan public number {lit.text!r}",
            }
        )

    counts = {status: 0 for status in CLAIM_STATUSES}
    for claim in ledger.claims:
        counts[claim.status] += 1
    counts["ungrounded"] += len(orphans)

    return AuditReport(
        counts=counts,
        violations=violations,
        total_claims=len(ledger.claims),
        orphan_count=len(orphans),
    )
