"""Canonical JSON serialization and atomic file writes.

Every on-disk artifact (ledger, trace, checkpoint, reports) goes through
canonical_dumps so that byte-for-byte comparison of two semantically equal
documents succeeds: keys sorted, two-space indent, floats via repr (shortest
round-trip form), trailing newline.
"""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any


def canonical_dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def atomic_write_text(path: Path, text: str) -> None:
    # Write-temp-then-rename so a crash mid-write never leaves a torn file.
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_canonical_json(path: Path, obj: Any) -> None:
    atomic_write_text(path, canonical_dumps(obj))


def read_json(path: Path) -> Any:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
