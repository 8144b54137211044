"""Public-file snapshots, diff detection and the forced audit pair."""
from __future__ import annotations

import hashlib
import subprocess

import pytest

from cesm.trigger import (
    DEFAULT_TRACKED_PATTERNS,
    INJECTED_PAIR,
    SUPPRESSED_SYMBOLS,
    DiffReport,
    TriggerError,
    detect_public_diff,
    forced_injection,
    snapshot,
)


@pytest.fixture
def repo(tmp_path):
    subprocess.run(["git", "init", "-q", str(tmp_path)], check=True)
    (tmp_path / "README.md").write_text("root readme\n")
    (tmp_path / "paper").mkdir()
    (tmp_path / "paper" / "main.tex").write_text("paper body\n")
    (tmp_path / "alpha").mkdir()
    (tmp_path / "alpha" / "README.md").write_text("repo readme\n")
    (tmp_path / "alpha" / "src.py").write_text("x = 1\n")
    return tmp_path


def test_snapshot_requires_git(tmp_path):
    (tmp_path / "README.md").write_text("anything\n")
    with pytest.raises(TriggerError, match="git working tree"):
        snapshot(tmp_path)


def test_snapshot_tracks_patterns_only(repo):
    snap = snapshot(repo)
    assert set(snap.file_hashes) == {
        "README.md",
        "paper/main.tex",
        "alpha/README.md",
    }
    want = hashlib.sha256(b"root readme\n").hexdigest()
    assert snap.file_hashes["README.md"] == want
    assert snap.patterns == DEFAULT_TRACKED_PATTERNS
    # nothing committed yet: no head id, but hashing still works
    assert snap.commit_id == ""


def test_snapshot_skips_hidden_and_symlinks(repo):
    (repo / ".cesm").mkdir()
    (repo / ".cesm" / "README.md").write_text("hidden\n")
    (repo / "link.tex").symlink_to(repo / "paper" / "main.tex")
    (repo / "paper" / "linked").symlink_to(repo / "paper" / "main.tex")
    snap = snapshot(repo)
    assert ".cesm/README.md" not in snap.file_hashes
    assert all("link" not in p for p in snap.file_hashes)


def test_snapshot_records_head_commit(repo):
    subprocess.run(
        ["git", "-C", str(repo), "add", "-A"], check=True, capture_output=True
    )
    subprocess.run(
        [
            "git",
            "-C",
            str(repo),
            "-c",
            "user.email=t@example.com",
            "-c",
            "user.name=t",
            "commit",
            "-qm",
            "init",
        ],
        check=True,
        capture_output=True,
    )
    snap = snapshot(repo)
    assert len(snap.commit_id) == 40


def test_diff_empty_when_unchanged(repo):
    a = snapshot(repo)
    b = snapshot(repo)
    report = detect_public_diff(a, b)
    assert report == DiffReport.empty()
    assert not report.public_change


def test_diff_detects_edit_add_delete(repo):
    before = snapshot(repo)
    (repo / "paper" / "main.tex").write_text("edited body\n")
    (repo / "beta").mkdir()
    (repo / "beta" / "README.md").write_text("new repo\n")
    (repo / "alpha" / "README.md").unlink()
    report = detect_public_diff(before, snapshot(repo))
    assert report.changed_paths == (
        "alpha/README.md",
        "beta/README.md",
        "paper/main.tex",
    )
    assert report.public_change
    assert report.paper_changed
    assert report.readme_changed


def test_diff_untracked_changes_are_invisible(repo):
    before = snapshot(repo)
    (repo / "alpha" / "src.py").write_text("x = 2\n")
    (repo / "notes.md").write_text("scratch\n")
    report = detect_public_diff(before, snapshot(repo))
    assert report == DiffReport.empty()


def test_diff_classifies_paper_vs_readme(repo):
    before = snapshot(repo)
    (repo / "README.md").write_text("touched\n")
    report = detect_public_diff(before, snapshot(repo))
    assert report.readme_changed and not report.paper_changed
    before = snapshot(repo)
    (repo / "paper" / "main.tex").write_text("touched too\n")
    report = detect_public_diff(before, snapshot(repo))
    assert report.paper_changed and not report.readme_changed


def test_diff_rejects_mismatched_pattern_sets(repo):
    a = snapshot(repo)
    b = snapshot(repo, patterns=("README.md",))
    with pytest.raises(TriggerError, match="pattern sets"):
        detect_public_diff(a, b)


def test_custom_patterns(repo):
    (repo / "docs").mkdir()
    (repo / "docs" / "guide.md").write_text("guide\n")
    snap = snapshot(repo, patterns=("docs/**/*.md",))
    assert set(snap.file_hashes) == {"docs/guide.md"}


def test_snapshot_roundtrip_through_diff_report():
    r = DiffReport(("a/README.md",), True, False, True)
    assert DiffReport.from_dict(r.to_dict()) == r


def test_forced_injection_fires_on_public_change():
    changed = DiffReport(("README.md",), True, False, True)
    assert forced_injection(changed, "PaperStrengthening") == INJECTED_PAIR
    assert forced_injection(changed, "Ideation") == INJECTED_PAIR


def test_forced_injection_suppressed_for_audit_symbols():
    changed = DiffReport(("paper/main.tex",), True, True, False)
    assert SUPPRESSED_SYMBOLS == {
        "GroundingCreation",
        "SkepticalAudit",
        "FinalGroundingAudit",
    }
    for sid in SUPPRESSED_SYMBOLS:
        assert forced_injection(changed, sid) == ()


def test_forced_injection_quiet_without_change():
    assert forced_injection(DiffReport.empty(), "PaperStrengthening") == ()
