"""Exact flexibility feedback from feasible-trajectory counting.

The feedback for a signal prefix assigns each grid level a probability
proportional to the number of feasible full trajectories that extend the
prefix through that level.  Counts are exact integers obtained by
depth-first search over the grid, pruned through the per-slot admissible
interval of the policy; probabilities are integer ratios converted to
float at the end.

Counting is stateless by default.  When every energy quantity in an
instance lies on a common quantum, an optional exact-state cache can be
enabled to collapse the search into dynamic programming over
(slot, remaining demands, previous signal) states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import DeadEnd, ValidationError
from .model import (
    ENERGY_TOL,
    AggregatorState,
    Instance,
    SignalGrid,
    initial_state,
    step_state,
)
from .policy import expand_feasible, get_policy


@dataclass(frozen=True)
class FeedbackVector:
    """Probability over grid levels for the next slot.

    ``counts`` carries the underlying integer trajectory counts when the
    vector came from exact or look-ahead counting.
    """

    grid: SignalGrid
    probabilities: tuple[float, ...]
    counts: tuple[int, ...] | None = None
    mode: str = "exact"
    depth: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "probabilities", tuple(float(p) for p in self.probabilities))
        problems = []
        if len(self.probabilities) != len(self.grid.levels):
            problems.append(
                f"{len(self.probabilities)} probabilities for {len(self.grid.levels)} grid levels"
            )
        if any(p < -1e-12 or not math.isfinite(p) for p in self.probabilities):
            problems.append("probabilities must be finite and nonnegative")
        elif abs(sum(self.probabilities) - 1.0) > 1e-9:
            problems.append(f"probabilities sum to {sum(self.probabilities)}, expected 1")
        if self.counts is not None:
            if len(self.counts) != len(self.grid.levels):
                problems.append("counts length does not match the grid")
            elif any((not isinstance(c, int)) or c < 0 for c in self.counts):
                problems.append("counts must be nonnegative integers")
        if self.mode not in ("exact", "lookahead"):
            problems.append(f"unknown feedback mode {self.mode!r}")
        if self.mode == "lookahead" and (not isinstance(self.depth, int) or self.depth < 1):
            problems.append("lookahead feedback requires an integer depth >= 1")
        if problems:
            raise ValidationError(problems)

    @property
    def support(self) -> tuple[float, ...]:
        return tuple(x for x, p in zip(self.grid.levels, self.probabilities) if p > 0.0)


@dataclass(frozen=True)
class PrefixState:
    """Result of replaying a signal prefix.

    ``status`` is "ok" when the prefix is clean and every session is still
    servable, "violated" when some slot broke tracking, a signal limit, or
    left a departure unserved, and "doomed" when the prefix is clean but a
    session can no longer be completed.
    """

    state: AggregatorState
    previous_signal: float
    status: str


def replay_prefix(instance: Instance, policy, prefix) -> PrefixState:
    """Walk a prefix forward under the policy, with full feasibility checks."""
    pol = get_policy(policy)
    prefix = tuple(float(x) for x in prefix)
    if len(prefix) > instance.horizon:
        raise ValidationError(
            f"prefix has {len(prefix)} entries, beyond horizon {instance.horizon}"
        )
    for x in prefix:
        instance.grid.index_of(x)
    cons = instance.constraints
    state = initial_state(instance)
    previous = cons.initial_signal
    for x in prefix:
        if cons.violation(x, previous) is not None:
            return PrefixState(state, previous, "violated")
        alloc = pol.allocate(state, x)
        if state.has_active and abs(alloc.total - x) > ENERGY_TOL:
            return PrefixState(state, previous, "violated")
        nxt = step_state(state, alloc)
        if len(nxt.unmet) > len(state.unmet):
            return PrefixState(state, previous, "violated")
        state = nxt
        previous = x
    if any(not ss.servable for ss in state.active):
        return PrefixState(state, previous, "doomed")
    return PrefixState(state, previous, "ok")


def _is_multiple(value: float, quantum: float) -> bool:
    return abs(value - round(value / quantum) * quantum) <= 1e-9


def _validate_quantum(instance: Instance, quantum: float) -> None:
    if not (isinstance(quantum, (int, float)) and math.isfinite(quantum) and quantum > 0):
        raise ValidationError(f"cache quantum must be a positive real, got {quantum!r}")
    problems = []
    for s in instance.sessions:
        if not _is_multiple(s.energy, quantum):
            problems.append(f"energy of session {s.id!r} is not a multiple of {quantum}")
        if not _is_multiple(s.peak_rate, quantum):
            problems.append(f"peak_rate of session {s.id!r} is not a multiple of {quantum}")
    for v in instance.grid.levels:
        if not _is_multiple(v, quantum):
            problems.append(f"grid level {v} is not a multiple of {quantum}")
    if not _is_multiple(instance.constraints.initial_signal, quantum):
        problems.append(f"initial_signal is not a multiple of {quantum}")
    if problems:
        raise ValidationError(problems)


class _CountCache:
    """Exact-state memo for counting on quantized instances."""

    def __init__(self, instance: Instance, quantum: float):
        _validate_quantum(instance, quantum)
        self.quantum = quantum
        self.ramp_active = instance.constraints.ramp_limit is not None
        self.store: dict = {}

    def key(self, state: AggregatorState, previous: float):
        energy_key = tuple(
            round(ss.remaining_energy / self.quantum) for ss in state.active
        )
        prev_key = round(previous / self.quantum) if self.ramp_active else None
        return (state.slot, energy_key, prev_key)


def _count_from(
    instance: Instance,
    pol,
    state: AggregatorState,
    previous: float,
    cache: _CountCache | None,
) -> int:
    if state.slot > instance.horizon:
        return 1
    key = None
    if cache is not None:
        key = cache.key(state, previous)
        hit = cache.store.get(key)
        if hit is not None:
            return hit
    total = 0
    for x, child in expand_feasible(pol, state, instance.grid, instance.constraints, previous):
        total += _count_from(instance, pol, child, x, cache)
    if cache is not None:
        cache.store[key] = total
    return total


def _make_cache(instance: Instance, cache_quantum, shared) -> _CountCache | None:
    if shared is not None:
        return shared
    if cache_quantum is None:
        return None
    return _CountCache(instance, float(cache_quantum))


def count_feasible(
    instance: Instance,
    policy,
    prefix=(),
    *,
    cache_quantum: float | None = None,
    _cache: _CountCache | None = None,
) -> int:
    """Number of feasible completions of the prefix (1 or 0 at full length)."""
    pol = get_policy(policy)
    ps = replay_prefix(instance, pol, prefix)
    if ps.status != "ok":
        return 0
    cache = _make_cache(instance, cache_quantum, _cache)
    return _count_from(instance, pol, ps.state, ps.previous_signal, cache)


def enumerate_feasible(instance: Instance, policy, prefix=()) -> list[tuple[float, ...]]:
    """All feasible completions of the prefix, lexicographic by grid index."""
    pol = get_policy(policy)
    ps = replay_prefix(instance, pol, prefix)
    if ps.status != "ok":
        return []
    out: list[tuple[float, ...]] = []
    acc: list[float] = []

    def rec(state: AggregatorState, previous: float) -> None:
        if state.slot > instance.horizon:
            out.append(tuple(acc))
            return
        for x, child in expand_feasible(pol, state, instance.grid, instance.constraints, previous):
            acc.append(x)
            rec(child, x)
            acc.pop()

    rec(ps.state, ps.previous_signal)
    return out


def _exists_from(instance: Instance, pol, state: AggregatorState, previous: float) -> bool:
    if state.slot > instance.horizon:
        return True
    for x, child in expand_feasible(pol, state, instance.grid, instance.constraints, previous):
        if _exists_from(instance, pol, child, x):
            return True
    return False


def optimal_feedback(
    instance: Instance,
    policy,
    prefix=(),
    *,
    cache_quantum: float | None = None,
    _cache: _CountCache | None = None,
) -> FeedbackVector:
    """Exact next-slot feedback for a prefix.

    Each level's probability is the fraction of the prefix's feasible
    completions that pass through it.  Raises DeadEnd when the prefix has
    no feasible completion, distinguishing a prefix that already broke a
    constraint from one that merely ran out of options.
    """
    pol = get_policy(policy)
    prefix = tuple(float(x) for x in prefix)
    if len(prefix) >= instance.horizon:
        raise ValidationError(
            f"feedback needs a prefix shorter than the horizon "
            f"({len(prefix)} >= {instance.horizon})"
        )
    ps = replay_prefix(instance, pol, prefix)
    slot = len(prefix) + 1
    if ps.status == "violated":
        raise DeadEnd(
            f"prefix {prefix} already violates a constraint",
            prefix=prefix,
            slot=slot,
            reason="already_infeasible",
        )
    counts = [0] * len(instance.grid.levels)
    if ps.status == "ok":
        cache = _make_cache(instance, cache_quantum, _cache)
        for x, child in expand_feasible(
            pol, ps.state, instance.grid, instance.constraints, ps.previous_signal
        ):
            counts[instance.grid.index_of(x)] = _count_from(instance, pol, child, x, cache)
    total = sum(counts)
    if total == 0:
        raise DeadEnd(
            f"no feasible completion from prefix {prefix}",
            prefix=prefix,
            slot=slot,
            reason="no_feasible_completion",
        )
    probabilities = tuple(c / total for c in counts)
    return FeedbackVector(
        grid=instance.grid,
        probabilities=probabilities,
        counts=tuple(counts),
        mode="exact",
    )


def entropy(feedback: FeedbackVector, log_base: float = 2.0) -> float:
    """Shannon entropy of a feedback vector, in units of the given log base."""
    if not (math.isfinite(log_base) and log_base > 0.0 and log_base != 1.0):
        raise ValidationError(f"log base must be positive and != 1, got {log_base!r}")
    acc = 0.0
    for p in feedback.probabilities:
        if p > 0.0:
            acc -= p * math.log(p)
    return acc / math.log(log_base)


def system_capacity(
    instance: Instance,
    policy,
    *,
    log_base: float = 2.0,
    cache_quantum: float | None = None,
) -> float:
    """Log of the number of feasible trajectories."""
    if not (math.isfinite(log_base) and log_base > 0.0 and log_base != 1.0):
        raise ValidationError(f"log base must be positive and != 1, got {log_base!r}")
    n = count_feasible(instance, policy, (), cache_quantum=cache_quantum)
    if n == 0:
        raise DeadEnd(
            "the instance admits no feasible trajectory",
            prefix=(),
            slot=1,
            reason="no_feasible_completion",
        )
    if log_base == 2.0:
        return math.log2(n)
    return math.log(n) / math.log(log_base)


def joint_probability(instance: Instance, policy, trajectory) -> float:
    """Probability the feedback chain assigns to a full trajectory.

    The product of the per-slot conditional probabilities, evaluated as an
    exact ratio of counts: 1/|feasible set| for feasible trajectories and 0
    otherwise.  Raises DeadEnd when the instance has no feasible trajectory
    at all.
    """
    trajectory = tuple(float(x) for x in trajectory)
    if len(trajectory) != instance.horizon:
        raise ValidationError(
            f"trajectory has {len(trajectory)} entries, expected horizon {instance.horizon}"
        )
    pol = get_policy(policy)
    previous_count = count_feasible(instance, pol, ())
    if previous_count == 0:
        raise DeadEnd(
            "the instance admits no feasible trajectory",
            prefix=(),
            slot=1,
            reason="no_feasible_completion",
        )
    probability = Fraction(1)
    for t in range(1, instance.horizon + 1):
        c = count_feasible(instance, pol, trajectory[:t])
        if c == 0:
            return 0.0
        probability *= Fraction(c, previous_count)
        previous_count = c
    return float(probability)
