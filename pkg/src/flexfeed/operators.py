"""Operator-side signal selection.

The operator receives the aggregator's feedback each slot and picks the
next signal level.  Two selectors are provided: a receding-horizon rule
that trades off slot cost against the log-probability of the level (a
flexibility bonus weighted by beta), and a sampler that draws from the
feedback distribution directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DeadEnd, ValidationError
from .feedback import FeedbackVector
from .model import OperationalConstraints, SignalGrid


@dataclass(frozen=True)
class CostCurve:
    """Per-slot cost of a signal level.

    Either ``prices`` (cost = price[t] * level) or a ``table`` of explicit
    per-level costs aligned to a grid; exactly one must be given.
    """

    prices: tuple[float, ...] | None = None
    table: tuple[tuple[float, ...], ...] | None = None
    grid: SignalGrid | None = None

    def __post_init__(self):
        problems = []
        if (self.prices is None) == (self.table is None):
            problems.append("exactly one of prices or table must be given")
        if self.prices is not None:
            object.__setattr__(self, "prices", tuple(float(p) for p in self.prices))
            if len(self.prices) == 0:
                problems.append("prices must cover at least one slot")
            if any(not math.isfinite(p) for p in self.prices):
                problems.append("prices must be finite")
        if self.table is not None:
            object.__setattr__(
                self, "table", tuple(tuple(float(v) for v in row) for row in self.table)
            )
            if self.grid is None:
                problems.append("a table cost curve needs its grid")
            elif any(len(row) != len(self.grid.levels) for row in self.table):
                problems.append("every table row must have one cost per grid level")
            if len(self.table) == 0:
                problems.append("table must cover at least one slot")
            if any(not math.isfinite(v) for row in self.table for v in row):
                problems.append("table costs must be finite")
        if problems:
            raise ValidationError(problems)

    @classmethod
    def linear(cls, prices) -> "CostCurve":
        return cls(prices=tuple(prices))

    @classmethod
    def tabulated(cls, rows, grid: SignalGrid) -> "CostCurve":
        return cls(table=tuple(tuple(r) for r in rows), grid=grid)

    @property
    def horizon(self) -> int:
        return len(self.prices) if self.prices is not None else len(self.table)

    def slot_cost(self, slot: int, level: float) -> float:
        """Cost of emitting ``level`` at 1-indexed ``slot``."""
        if not (1 <= slot <= self.horizon):
            raise ValidationError(f"slot {slot} outside cost horizon 1..{self.horizon}")
        if self.prices is not None:
            return self.prices[slot - 1] * float(level)
        return self.table[slot - 1][self.grid.index_of(level)]


@dataclass(frozen=True)
class OperatorDecision:
    signal: float
    objective_value: float
    feasible_candidates: int


def rhc_select(
    feedback: FeedbackVector,
    cost_curve: CostCurve,
    slot: int,
    previous_signal: float,
    constraints: OperationalConstraints,
    beta: float,
    *,
    log_base: float = 2.0,
) -> OperatorDecision:
    """Pick the level minimizing cost minus beta times log-probability.

    Only levels with positive feedback probability that satisfy the peak
    and ramp limits are candidates; ties go to the lower level.  Raises
    DeadEnd naming the binding filter when no candidate remains.
    """
    if not (math.isfinite(beta) and beta >= 0.0):
        raise ValidationError(f"beta must be a finite nonnegative real, got {beta!r}")
    log_scale = math.log(log_base)
    positive = [
        (x, p) for x, p in zip(feedback.grid.levels, feedback.probabilities) if p > 0.0
    ]
    if not positive:
        raise DeadEnd(
            "every feedback probability is zero",
            slot=slot,
            reason="no_candidate",
        )
    candidates = [
        (x, p) for x, p in positive if constraints.allows(x, previous_signal)
    ]
    if not candidates:
        after_peak = [
            x for x, _ in positive
            if constraints.peak_limit is None or x <= constraints.peak_limit + 1e-9
        ]
        binding = "peak limit" if not after_peak else "ramp limit"
        raise DeadEnd(
            f"no positive-probability level satisfies the {binding} at slot {slot}",
            slot=slot,
            reason="no_candidate",
        )
    best_x = None
    best_obj = math.inf
    for x, p in candidates:
        objective = cost_curve.slot_cost(slot, x) + beta * (-math.log(p) / log_scale)
        if objective < best_obj:
            best_obj = objective
            best_x = x
    return OperatorDecision(
        signal=best_x, objective_value=best_obj, feasible_candidates=len(candidates)
    )


def sample_signal(
    feedback: FeedbackVector,
    rng,
    slot: int | None = None,
    previous_signal: float | None = None,
    constraints: OperationalConstraints | None = None,
) -> float:
    """Draw a level from the feedback distribution by inverse CDF.

    When constraints are given, levels violating them are masked out and
    the rest renormalized; with feedback that respects the constraints this
    is a no-op and each level is drawn with exactly its probability.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    weights = list(feedback.probabilities)
    if constraints is not None and previous_signal is not None:
        for i, x in enumerate(feedback.grid.levels):
            if not constraints.allows(x, previous_signal):
                weights[i] = 0.0
    total = sum(weights)
    if total <= 0.0:
        raise DeadEnd(
            "no level with positive probability satisfies the constraints",
            slot=slot,
            reason="no_candidate",
        )
    u = rng.random() * total
    acc = 0.0
    last_positive = None
    for x, w in zip(feedback.grid.levels, weights):
        if w <= 0.0:
            continue
        acc += w
        last_positive = x
        if u < acc:
            return x
    return last_positive


def evaluate_cost(cost_curve: CostCurve, trajectory) -> float:
    """Total cost of a trajectory under the curve."""
    trajectory = tuple(float(x) for x in trajectory)
    if len(trajectory) > cost_curve.horizon:
        raise ValidationError(
            f"trajectory has {len(trajectory)} slots but the cost curve covers "
            f"{cost_curve.horizon}"
        )
    return sum(cost_curve.slot_cost(t, x) for t, x in enumerate(trajectory, start=1))
