"""The prompt alphabet: seventeen symbols, their phases, and prompt rendering.

Each symbol names one kind of agent run (write theory, generate a repo,
audit claims, ...). The controller never invents prompts at runtime; it
selects a symbol and renders that symbol's template against the current
workspace summary. The table below is the single source of truth for
symbol identity, phase membership, expansiveness, and touched surfaces.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional

__all__ = [
    "Phase",
    "Surface",
    "PromptSymbol",
    "PromptText",
    "RenderError",
    "ALPHABET",
    "SYMBOLS",
    "EXPANSIVE_FOLLOW_UPS",
    "symbol",
    "follow_up",
    "render_prompt",
]


class Phase(str, Enum):
    SEED = "seed"
    GENERATE = "generate"
    HARDEN = "harden"
    TAIL = "tail"


class Surface(str, Enum):
    """Workspace surfaces a symbol's run is expected to touch."""

    THEORY = "theory"
    REPOS = "repos"
    PUBLIC = "public"
    EVIDENCE = "evidence"
    UTILITY = "utility"


@dataclass(frozen=True)
class PromptSymbol:
    id: str
    phase: Phase
    expansive: bool
    touched_surfaces: frozenset[Surface]
    alphabet_index: int

    def __str__(self) -> str:
        return self.id


def _sym(
    index: int, sid: str, phase: Phase, expansive: bool, *surfaces: Surface
) -> PromptSymbol:
    return PromptSymbol(sid, phase, expansive, frozenset(surfaces), index)


# Fixed total order; indices are load-bearing (ties in the scorer break
# toward the smaller index) and must never be renumbered.
ALPHABET: tuple[PromptSymbol, ...] = (
    _sym(0, "Ideation", Phase.SEED, False, Surface.THEORY, Surface.UTILITY),
    _sym(1, "TheoryCreation", Phase.SEED, False, Surface.THEORY),
    _sym(2, "SeedGeneration", Phase.GENERATE, True, Surface.REPOS, Surface.PUBLIC),
    _sym(3, "SeedUpgrade", Phase.GENERATE, True, Surface.REPOS, Surface.EVIDENCE),
    _sym(4, "PaperStrengthening", Phase.HARDEN, False, Surface.PUBLIC, Surface.THEORY),
    _sym(5, "READMEVerification", Phase.HARDEN, False, Surface.PUBLIC),
    _sym(6, "BenchmarkTightening", Phase.HARDEN, False, Surface.EVIDENCE),
    _sym(7, "GroundingCreation", Phase.HARDEN, False, Surface.EVIDENCE, Surface.PUBLIC),
    _sym(8, "SkepticalAudit", Phase.HARDEN, False, Surface.PUBLIC, Surface.EVIDENCE),
    _sym(9, "PaperRewrite", Phase.HARDEN, False, Surface.PUBLIC),
    _sym(10, "ClaimCleanup", Phase.HARDEN, False, Surface.PUBLIC),
    _sym(11, "PortfolioExpansion", Phase.HARDEN, True, Surface.REPOS, Surface.PUBLIC),
    _sym(12, "BenchmarkSearch", Phase.HARDEN, False, Surface.EVIDENCE),
    _sym(13, "FinalGroundingAudit", Phase.TAIL, False, Surface.EVIDENCE, Surface.PUBLIC),
    _sym(14, "Critique", Phase.TAIL, False, Surface.PUBLIC),
    _sym(15, "ResponseToCritique", Phase.TAIL, False, Surface.PUBLIC),
    _sym(16, "AcademicPaperPolish", Phase.TAIL, False, Surface.PUBLIC),
)

SYMBOLS: dict[str, PromptSymbol] = {s.id: s for s in ALPHABET}

# Every expansive run creates fresh unaudited claims, so it owes the same
# two-step debt: record grounding for what was built, then audit it.
EXPANSIVE_FOLLOW_UPS: tuple[str, ...] = ("GroundingCreation", "SkepticalAudit")


def symbol(sid: str) -> PromptSymbol:
    try:
        return SYMBOLS[sid]
    except KeyError:
        raise KeyError(f"unknown prompt symbol: {sid!r}") from None


def follow_up(p: PromptSymbol | str) -> tuple[str, ...]:
    """Static follow-up obligations for a symbol (empty unless expansive)."""
    sym = symbol(p) if isinstance(p, str) else p
    return EXPANSIVE_FOLLOW_UPS if sym.expansive else ()


@dataclass(frozen=True)
class PromptText:
    symbol_id: str
    text: str
    substitutions: Mapping[str, str]


class RenderError(ValueError):
    """A template referenced a placeholder the summary does not provide."""


_PLACEHOLDER = re.compile(r"\{\{([a-z_]+)\}\}")


def _template_text(sid: str, template_dir: Optional[Path]) -> str:
    if template_dir is not None:
        path = template_dir / f"{sid}.prompt"
        if not path.is_file():
            raise FileNotFoundError(f"no template for {sid} in {template_dir}")
        return path.read_text(encoding="utf-8")
    ref = resources.files("cesm").joinpath("templates", f"{sid}.prompt")
    return ref.read_text(encoding="utf-8")


def render_prompt(
    p: PromptSymbol | str,
    substitutions: Mapping[str, str],
    template_dir: Optional[Path] = None,
) -> PromptText:
    """Render a symbol's template with ``{{name}}`` placeholders filled in.

    Args:
        p: symbol (or id) whose template to render.
        substitutions: placeholder values, normally built by
            :func:`cesm.workspace.prompt_substitutions`.
        template_dir: override directory of ``<symbol_id>.prompt`` files;
            defaults to the templates packaged with cesm.

    Raises:
        RenderError: the template names a placeholder missing from
            ``substitutions`` (the error names the placeholder).
    """
    sym = symbol(p) if isinstance(p, str) else p
    raw = _template_text(sym.id, template_dir)
    used: dict[str, str] = {}

    def _fill(match: re.Match[str]) -> str:
        name = match.group(1)
        if name not in substitutions:
            raise RenderError(
                f"template {sym.id}.prompt uses unknown placeholder {name!r}"
            )
        used[name] = str(substitutions[name])
        return used[name]

    text = _PLACEHOLDER.sub(_fill, raw)
    return PromptText(symbol_id=sym.id, text=text, substitutions=used)
