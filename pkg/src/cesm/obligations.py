"""Decaying obligation pressure.

The controller carries a five-axis vector of outstanding debts: grounding
work, audit work, benchmark work, and keeping the paper and READMEs in
sync with the code. Each step the vector decays geometrically and the
selected symbol adds its push. With decay rate L in (0,1) every axis is
bounded by max_push / (1 - L), so pressure can spike after a burst of
expansive work but always drains back down.

The default decay rate is exactly 2 ** (-1/8): an untouched debt halves
every eight steps.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

__all__ = [
    "AXES",
    "DEFAULT_DECAY",
    "ObligationVector",
    "PushTable",
    "decay_and_push",
    "pressure",
    "pressure_bound",
]

AXES: tuple[str, ...] = ("ground", "audit", "bench", "paper_sync", "readme_sync")

# Computed, never a rounded literal: float(2 ** (-1/8)) = 0.9170040432046712
DEFAULT_DECAY: float = 2.0 ** (-1.0 / 8.0)


@dataclass(frozen=True)
class ObligationVector:
    ground: float = 0.0
    audit: float = 0.0
    bench: float = 0.0
    paper_sync: float = 0.0
    readme_sync: float = 0.0

    def __post_init__(self) -> None:
        for axis in AXES:
            if getattr(self, axis) < 0.0:
                raise ValueError(f"obligation component {axis} must be >= 0")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.ground, self.audit, self.bench, self.paper_sync, self.readme_sync)

    def as_dict(self) -> dict[str, float]:
        return {axis: getattr(self, axis) for axis in AXES}

    @classmethod
    def from_iterable(cls, values: Iterable[float]) -> "ObligationVector":
        vals = tuple(float(v) for v in values)
        if len(vals) != len(AXES):
            raise ValueError(f"expected {len(AXES)} components, got {len(vals)}")
        return cls(*vals)

    def __add__(self, other: "ObligationVector") -> "ObligationVector":
        return ObligationVector(
            *(a + b for a, b in zip(self.as_tuple(), other.as_tuple()))
        )

    def scaled(self, factor: float) -> "ObligationVector":
        return ObligationVector(*(factor * v for v in self.as_tuple()))


ZERO_PUSH = ObligationVector()

# Expansive runs owe grounding and audit debt immediately and some
# benchmark debt; nothing else pushes by default. Paper/README sync
# pushes come from the diff hooks, not from this table.
_DEFAULT_EXPANSIVE_PUSH = ObligationVector(1.0, 1.0, 0.5, 0.0, 0.0)
_DEFAULT_PAPER_HOOK = ObligationVector(0.0, 0.0, 0.0, 1.0, 0.0)
_DEFAULT_README_HOOK = ObligationVector(0.0, 0.0, 0.0, 0.0, 1.0)


@dataclass(frozen=True)
class PushTable:
    """Per-symbol pushes plus the two diff-hook pushes.

    alpha_max is the largest single component anywhere in the table; it is
    the constant that appears in the pressure bound.
    """

    by_symbol: Mapping[str, ObligationVector]
    paper_hook: ObligationVector = _DEFAULT_PAPER_HOOK
    readme_hook: ObligationVector = _DEFAULT_README_HOOK

    def push_for(self, symbol_id: str) -> ObligationVector:
        return self.by_symbol.get(symbol_id, ZERO_PUSH)

    @property
    def alpha_max(self) -> float:
        components: list[float] = []
        for vec in self.by_symbol.values():
            components.extend(vec.as_tuple())
        components.extend(self.paper_hook.as_tuple())
        components.extend(self.readme_hook.as_tuple())
        return max(components, default=0.0)


def default_push_table(expansive_symbol_ids: Iterable[str]) -> PushTable:
    return PushTable(
        by_symbol={sid: _DEFAULT_EXPANSIVE_PUSH for sid in expansive_symbol_ids}
    )


def decay_and_push(
    o: ObligationVector, push: ObligationVector, decay: float = DEFAULT_DECAY
) -> ObligationVector:
    """One obligation step: o' = decay * o + push.

    decay must lie in (0, 1) for the boundedness guarantee to hold; a run
    that deliberately disables decay (the ablation harness) constructs its
    updates with check_decay=False via this module's internals, everything
    else goes through here.
    """
    _check_decay(decay)
    return _decay_and_push_unchecked(o, push, decay)


def _decay_and_push_unchecked(
    o: ObligationVector, push: ObligationVector, decay: float
) -> ObligationVector:
    return ObligationVector(
        *(decay * v + a for v, a in zip(o.as_tuple(), push.as_tuple()))
    )


def _check_decay(decay: float) -> None:
    if not (0.0 < decay < 1.0):
        raise ValueError(f"decay rate must be in (0, 1), got {decay!r}")


def pressure(o: ObligationVector) -> float:
    """Total outstanding debt: the l1 norm (components are nonnegative)."""
    return sum(o.as_tuple())


def pressure_bound(k: int, alpha_max: float, decay: float = DEFAULT_DECAY) -> float:
    """Supremum of pressure under repeated worst-case pushes.

    Each component is a geometric series bounded by alpha_max / (1 - decay),
    and k components give k * alpha_max / (1 - decay). With the default
    decay and k = 5 this is about 60.2439 * alpha_max.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if alpha_max < 0.0:
        raise ValueError("alpha_max must be >= 0")
    _check_decay(decay)
    return k * alpha_max / (1.0 - decay)
