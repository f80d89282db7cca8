"""Causal disaggregation policies.

A policy splits one slot's signal across the active sessions.  All built-in
policies are greedy waterfillers: sessions are ranked, then each in turn
receives as much as possible until the signal is used up.  They differ only
in the ranking, except for the interval-maximizing policy which serves
mandatory minimum rates before distributing the surplus.

The module also computes, for a given state, the closed interval of signal
values the policy can track this slot without losing any session, and the
slot expansion helper built on it that the counting routines share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ContractViolation, InfeasibleStateError, ValidationError
from .model import (
    ENERGY_TOL,
    AggregatorState,
    Allocation,
    Instance,
    SessionState,
    SignalGrid,
    OperationalConstraints,
    initial_state,
    step_state,
)


def laxity(session_state: SessionState) -> float:
    """Scheduling slack of a session at its current slot.

    Slots remaining after this one, minus the number of full-rate slots the
    remaining demand still needs.  Negative means the session must charge
    above zero this slot; below -1 it can no longer be served.  Returns
    +inf before arrival.
    """
    s = session_state.session
    if session_state.slot < s.arrival:
        return math.inf
    delta = max(0, s.departure - session_state.slot)
    return delta - session_state.remaining_energy / s.peak_rate


@dataclass(frozen=True)
class IntervalBounds:
    """Closed range [lower, upper] of signals trackable without losing a session."""

    lower: float
    upper: float


class SchedulingPolicy:
    """Base class for per-slot disaggregation rules.

    Subclasses implement ``allocate`` and, when ``monotone`` is True (larger
    signals never reduce any session's share), an exact ``bounds``.
    """

    name: str = "base"
    monotone: bool = False

    def allocate(self, state: AggregatorState, signal: float) -> Allocation:
        raise NotImplementedError

    def bounds(self, state: AggregatorState) -> IntervalBounds:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


def _check_signal(signal: float) -> float:
    if not math.isfinite(signal) or signal < -ENERGY_TOL:
        raise ContractViolation(f"signal must be a finite nonnegative real, got {signal!r}")
    return max(0.0, float(signal))


class _RankedWaterfill(SchedulingPolicy):
    """Waterfilling in a fixed ranking of the active sessions."""

    monotone = True

    def _rank_key(self, ss: SessionState):
        raise NotImplementedError

    def allocate(self, state: AggregatorState, signal: float) -> Allocation:
        left = _check_signal(signal)
        amounts = {ss.session.id: 0.0 for ss in state.active}
        for ss in sorted(state.active, key=self._rank_key):
            give = min(ss.deliverable_now, left)
            amounts[ss.session.id] = give
            left = max(0.0, left - give)
        return Allocation(tuple(sorted(amounts.items())))

    def bounds(self, state: AggregatorState) -> IntervalBounds:
        # Walking the service order: a session with a mandatory minimum is
        # only reached after everyone ranked before it is filled to its cap,
        # so the binding signal for that session is cap-sum-before + minimum.
        lower = 0.0
        cap_sum = 0.0
        for ss in sorted(state.active, key=self._rank_key):
            required = ss.required_now
            if required > ss.session.peak_rate + ENERGY_TOL:
                raise InfeasibleStateError(
                    f"session {ss.session.id!r} needs {required} at slot {ss.slot}, "
                    f"above its peak rate {ss.session.peak_rate}"
                )
            if required > 0.0:
                lower = max(lower, cap_sum + required)
            cap_sum += ss.deliverable_now
        return IntervalBounds(lower, cap_sum)


class LeastLaxityFirst(_RankedWaterfill):
    """Serve the session with the least scheduling slack first."""

    name = "LLF"

    def _rank_key(self, ss: SessionState):
        return (laxity(ss), ss.session.departure, ss.session.id)


class EarliestDeadlineFirst(_RankedWaterfill):
    """Serve the session departing soonest first."""

    name = "EDF"

    def _rank_key(self, ss: SessionState):
        return (ss.session.departure, laxity(ss), ss.session.id)


class IntervalMaximizing(SchedulingPolicy):
    """Serve mandatory minimum rates first, then top up in laxity order.

    Sessions with negative laxity get exactly the rate they need to stay
    servable before anyone receives more.  This keeps every session's slack
    as high as possible and therefore keeps the range of trackable signals
    as wide as it can be.
    """

    name = "FIM"
    monotone = True

    @staticmethod
    def _rank_key(ss: SessionState):
        return (laxity(ss), ss.session.departure, ss.session.id)

    def allocate(self, state: AggregatorState, signal: float) -> Allocation:
        left = _check_signal(signal)
        order = sorted(state.active, key=self._rank_key)
        amounts = {ss.session.id: 0.0 for ss in state.active}
        for ss in order:
            need = min(ss.required_now, ss.deliverable_now, left)
            if need > 0.0:
                amounts[ss.session.id] = need
                left = max(0.0, left - need)
        for ss in order:
            room = ss.deliverable_now - amounts[ss.session.id]
            give = min(room, left)
            if give > 0.0:
                amounts[ss.session.id] += give
                left = max(0.0, left - give)
        return Allocation(tuple(sorted(amounts.items())))

    def bounds(self, state: AggregatorState) -> IntervalBounds:
        lower = 0.0
        upper = 0.0
        for ss in state.active:
            required = ss.required_now
            if required > ss.session.peak_rate + ENERGY_TOL:
                raise InfeasibleStateError(
                    f"session {ss.session.id!r} needs {required} at slot {ss.slot}, "
                    f"above its peak rate {ss.session.peak_rate}"
                )
            lower += required
            upper += ss.deliverable_now
        return IntervalBounds(lower, upper)


class PolicyKind(str, Enum):
    LLF = "LLF"
    EDF = "EDF"
    FIM = "FIM"


_BUILTINS = {
    PolicyKind.LLF: LeastLaxityFirst(),
    PolicyKind.EDF: EarliestDeadlineFirst(),
    PolicyKind.FIM: IntervalMaximizing(),
}


def get_policy(spec) -> SchedulingPolicy:
    """Resolve a PolicyKind, name string, or policy object to a policy object."""
    if isinstance(spec, SchedulingPolicy):
        return spec
    if isinstance(spec, PolicyKind):
        return _BUILTINS[spec]
    if isinstance(spec, str):
        try:
            return _BUILTINS[PolicyKind(spec.upper())]
        except ValueError:
            raise ValidationError(
                f"unknown policy {spec!r}; expected one of "
                f"{[k.value for k in PolicyKind]}"
            ) from None
    raise ValidationError(f"cannot interpret {spec!r} as a policy")


def allocate(kind, state: AggregatorState, signal: float) -> Allocation:
    return get_policy(kind).allocate(state, signal)


def interval_bounds(kind, state: AggregatorState) -> IntervalBounds:
    return get_policy(kind).bounds(state)


def expand_feasible(
    policy,
    state: AggregatorState,
    grid: SignalGrid,
    constraints: OperationalConstraints,
    previous_signal: float,
) -> list[tuple[float, AggregatorState]]:
    """Grid levels survivable this slot, each with its successor state.

    A level survives when it satisfies the peak and ramp limits, the policy
    tracks it exactly (vacuously true with no active session), no session
    departs unserved, and every session remains servable afterwards.  For
    monotone policies the survivors are exactly the grid points inside the
    policy's bounds, so only those are expanded; other policies are
    simulated level by level.
    """
    pol = get_policy(policy)
    lo = 0.0
    hi = math.inf
    if constraints.peak_limit is not None:
        hi = min(hi, constraints.peak_limit + ENERGY_TOL)
    if constraints.ramp_limit is not None:
        lo = max(lo, previous_signal - constraints.ramp_limit - ENERGY_TOL)
        hi = min(hi, previous_signal + constraints.ramp_limit + ENERGY_TOL)

    if pol.monotone:
        if state.has_active:
            try:
                b = pol.bounds(state)
            except InfeasibleStateError:
                return []
            lo = max(lo, b.lower - ENERGY_TOL)
            hi = min(hi, b.upper + ENERGY_TOL)
        out = []
        for x in grid.levels:
            if lo <= x <= hi:
                out.append((x, step_state(state, pol.allocate(state, x))))
        return out

    out = []
    for x in grid.levels:
        if not (lo <= x <= hi):
            continue
        alloc = pol.allocate(state, x)
        if state.has_active and abs(alloc.total - x) > ENERGY_TOL:
            continue
        child = step_state(state, alloc)
        if len(child.unmet) > len(state.unmet):
            continue
        if any(not ss.servable for ss in child.active):
            continue
        out.append((x, child))
    return out


@dataclass(frozen=True)
class MonotonicityCounterexample:
    prefix: tuple[float, ...]
    lower_signal: float
    higher_signal: float
    session_id: str
    lower_amount: float
    higher_amount: float


@dataclass(frozen=True)
class MonotonicityReport:
    passed: bool
    pairs_checked: int
    counterexample: MonotonicityCounterexample | None = None


def monotonicity_check(
    kind,
    instance: Instance,
    samples: int = 200,
    rng=None,
) -> MonotonicityReport:
    """Search for a monotonicity violation of a policy on an instance.

    Walks randomly sampled survivable signal prefixes and, at each reached
    state, compares allocations for every ordered pair of grid levels.  A
    policy is monotone when a higher signal never gives any session less.
    Returns the first counterexample found, if any.
    """
    pol = get_policy(kind)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    grid = instance.grid
    pairs_checked = 0
    for _ in range(max(1, samples)):
        state = initial_state(instance)
        previous = instance.constraints.initial_signal
        prefix: list[float] = []
        depth = int(rng.integers(0, instance.horizon))
        for _ in range(depth):
            children = expand_feasible(pol, state, grid, instance.constraints, previous)
            if not children:
                break
            x, state = children[int(rng.integers(len(children)))]
            prefix.append(x)
            previous = x
        if state.slot > instance.horizon:
            continue
        allocs = [pol.allocate(state, x) for x in grid.levels]
        ids = [ss.session.id for ss in state.active]
        for i in range(len(grid.levels)):
            for j in range(i + 1, len(grid.levels)):
                pairs_checked += 1
                for sid in ids:
                    low_amt = allocs[i].get(sid)
                    high_amt = allocs[j].get(sid)
                    if low_amt > high_amt + ENERGY_TOL:
                        return MonotonicityReport(
                            False,
                            pairs_checked,
                            MonotonicityCounterexample(
                                tuple(prefix),
                                grid.levels[i],
                                grid.levels[j],
                                sid,
                                low_amt,
                                high_amt,
                            ),
                        )
    return MonotonicityReport(True, pairs_checked, None)
