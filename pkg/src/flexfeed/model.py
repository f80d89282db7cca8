"""Domain model for an aggregator of deferrable charging loads.

Time is divided into slots numbered 1..horizon.  A charging session occupies
the inclusive window [arrival, departure] and can only receive energy there,
at a rate between 0 and its peak rate per slot.  Each slot the system
operator sends one signal level from a finite grid; the aggregator splits
that amount across the plugged-in sessions.

A full signal trajectory is feasible when the aggregator can track every
slot exactly, every session's demand is met by its departure, and any
configured peak/ramp limits on the signal itself hold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ContractViolation, ValidationError

# Absolute tolerance for all energy comparisons.
ENERGY_TOL = 1e-9


@dataclass(frozen=True)
class Session:
    """One charging session (one vehicle at one station).

    Attributes:
        id: opaque identifier, unique within an instance.
        arrival: first slot (1-indexed) the session is plugged in.
        departure: last slot the session is plugged in (inclusive).
        energy: total energy demand over the stay.
        peak_rate: maximum energy deliverable to this session per slot.
    """

    id: str
    arrival: int
    departure: int
    energy: float
    peak_rate: float

    def __post_init__(self):
        problems = []
        if not isinstance(self.id, str) or not self.id:
            problems.append("session id must be a non-empty string")
        if not isinstance(self.arrival, int) or self.arrival < 1:
            problems.append(f"arrival must be an integer >= 1, got {self.arrival!r}")
        if not isinstance(self.departure, int) or self.departure < self.arrival:
            problems.append(
                f"departure must be an integer >= arrival, got {self.departure!r}"
            )
        if not math.isfinite(self.energy) or self.energy < 0.0:
            problems.append(f"energy must be a finite nonnegative real, got {self.energy!r}")
        if not math.isfinite(self.peak_rate) or self.peak_rate <= 0.0:
            problems.append(f"peak_rate must be a finite positive real, got {self.peak_rate!r}")
        if not problems:
            window = self.departure - self.arrival + 1
            if self.energy > self.peak_rate * window + ENERGY_TOL:
                problems.append(
                    f"session {self.id!r} cannot be served in isolation: "
                    f"energy {self.energy} exceeds peak_rate * window = "
                    f"{self.peak_rate * window}"
                )
        if problems:
            raise ValidationError(problems)

    @property
    def window(self) -> int:
        """Number of slots the session is plugged in."""
        return self.departure - self.arrival + 1


@dataclass(frozen=True)
class SessionState:
    """A session together with its remaining demand at the current slot."""

    session: Session
    remaining_energy: float
    slot: int

    @property
    def remaining_slots(self) -> int:
        """Slots left after the current one, within the session window."""
        return max(0, self.session.departure - self.slot)

    @property
    def deliverable_now(self) -> float:
        """Largest amount this session can absorb in the current slot."""
        return min(self.session.peak_rate, max(0.0, self.remaining_energy))

    @property
    def required_now(self) -> float:
        """Smallest amount that must be delivered this slot to stay servable.

        Whatever is not delivered now has to fit in the remaining slots at
        peak rate; anything above that is mandatory now.
        """
        return max(0.0, self.remaining_energy - self.session.peak_rate * self.remaining_slots)

    @property
    def servable(self) -> bool:
        """True when the remaining demand still fits before departure."""
        return self.required_now <= self.session.peak_rate + ENERGY_TOL


@dataclass(frozen=True)
class SignalGrid:
    """Finite, strictly increasing list of nonnegative signal levels."""

    levels: tuple[float, ...]

    def __post_init__(self):
        levels = tuple(float(v) for v in self.levels)
        object.__setattr__(self, "levels", levels)
        problems = []
        if len(levels) == 0:
            problems.append("grid must contain at least one level")
        for v in levels:
            if not math.isfinite(v) or v < 0.0:
                problems.append(f"grid level {v!r} is not a finite nonnegative real")
                break
        if any(b <= a for a, b in zip(levels, levels[1:])):
            problems.append("grid levels must be strictly increasing")
        if problems:
            raise ValidationError(problems)

    @classmethod
    def uniform(cls, low: float, high: float, count: int) -> "SignalGrid":
        """Evenly spaced grid of ``count`` levels from ``low`` to ``high``."""
        if count < 1:
            raise ValidationError("grid must contain at least one level")
        if count == 1:
            return cls((float(low),))
        step = (float(high) - float(low)) / (count - 1)
        return cls(tuple(float(low) + step * i for i in range(count)))

    def index_of(self, value: float, tol: float = ENERGY_TOL) -> int:
        for i, v in enumerate(self.levels):
            if abs(v - value) <= tol:
                return i
        raise ValidationError(f"value {value!r} is not a grid level")

    @property
    def max_level(self) -> float:
        return self.levels[-1]

    def __len__(self) -> int:
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)


@dataclass(frozen=True)
class OperationalConstraints:
    """Operator-side limits on the signal trajectory.

    ``peak_limit`` caps every slot's signal; ``ramp_limit`` caps the absolute
    slot-to-slot change, with ``initial_signal`` standing in for the signal
    before slot 1.  ``None`` disables the corresponding limit.
    """

    peak_limit: float | None = None
    ramp_limit: float | None = None
    initial_signal: float = 0.0

    def __post_init__(self):
        problems = []
        for name in ("peak_limit", "ramp_limit"):
            v = getattr(self, name)
            if v is not None and (not math.isfinite(v) or v < 0.0):
                problems.append(f"{name} must be a finite nonnegative real or None, got {v!r}")
        if not math.isfinite(self.initial_signal) or self.initial_signal < 0.0:
            problems.append(
                f"initial_signal must be a finite nonnegative real, got {self.initial_signal!r}"
            )
        if problems:
            raise ValidationError(problems)

    @property
    def unconstrained(self) -> bool:
        return self.peak_limit is None and self.ramp_limit is None

    def violation(self, signal: float, previous_signal: float) -> str | None:
        """Name of the violated limit for this transition, or None."""
        if self.peak_limit is not None and signal > self.peak_limit + ENERGY_TOL:
            return "peak"
        if self.ramp_limit is not None and abs(signal - previous_signal) > self.ramp_limit + ENERGY_TOL:
            return "ramp"
        return None

    def allows(self, signal: float, previous_signal: float) -> bool:
        return self.violation(signal, previous_signal) is None


UNCONSTRAINED = OperationalConstraints()


@dataclass(frozen=True)
class Allocation:
    """Per-session energy assignment for one slot.

    Entries are (session id, amount) pairs for active sessions; sessions
    absent from the entries receive zero.
    """

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "entries", tuple((str(k), float(v)) for k, v in self.entries)
        )

    @classmethod
    def empty(cls) -> "Allocation":
        return cls(())

    @property
    def total(self) -> float:
        return sum(v for _, v in self.entries)

    def get(self, session_id: str, default: float = 0.0) -> float:
        for k, v in self.entries:
            if k == session_id:
                return v
        return default

    def as_dict(self) -> dict[str, float]:
        return dict(self.entries)


@dataclass(frozen=True)
class Instance:
    """A closed problem description: sessions, grid, horizon, signal limits."""

    horizon: int
    sessions: tuple[Session, ...]
    grid: SignalGrid
    constraints: OperationalConstraints = field(default=UNCONSTRAINED)

    def __post_init__(self):
        object.__setattr__(self, "sessions", tuple(self.sessions))
        problems = []
        if not isinstance(self.horizon, int) or self.horizon < 1:
            problems.append(f"horizon must be an integer >= 1, got {self.horizon!r}")
        seen = set()
        for s in self.sessions:
            if s.id in seen:
                problems.append(f"duplicate session id {s.id!r}")
            seen.add(s.id)
            if isinstance(self.horizon, int) and s.departure > self.horizon:
                problems.append(
                    f"session {s.id!r} departs at slot {s.departure}, "
                    f"beyond horizon {self.horizon}"
                )
        if problems:
            raise ValidationError(problems)

    @property
    def total_demand(self) -> float:
        return sum(s.energy for s in self.sessions)


@dataclass(frozen=True)
class AggregatorState:
    """Aggregator-side state at the start of a slot.

    ``active`` holds the plugged-in sessions with their remaining demands,
    sorted by session id.  ``pending`` holds future arrivals.  ``unmet``
    accumulates (id, energy) pairs for sessions that departed with demand
    left over; a state with a nonempty ``unmet`` can never be part of a
    feasible run.
    """

    slot: int
    active: tuple[SessionState, ...]
    pending: tuple[Session, ...]
    unmet: tuple[tuple[str, float], ...] = ()

    @property
    def has_active(self) -> bool:
        return len(self.active) > 0


def initial_state(instance: Instance) -> AggregatorState:
    """State at the start of slot 1."""
    active = tuple(
        SessionState(s, s.energy, 1)
        for s in sorted(instance.sessions, key=lambda s: s.id)
        if s.arrival == 1
    )
    pending = tuple(
        sorted(
            (s for s in instance.sessions if s.arrival > 1),
            key=lambda s: (s.arrival, s.id),
        )
    )
    return AggregatorState(slot=1, active=active, pending=pending)


def step_state(state: AggregatorState, allocation: Allocation) -> AggregatorState:
    """Apply one slot's allocation and advance to the next slot.

    Raises ContractViolation when the allocation pays an unknown session,
    is negative, or exceeds a session's peak rate or remaining demand.
    Sessions whose window ends at the current slot are dropped; if they
    leave demand behind the amount is recorded in ``unmet``.
    """
    by_id = {ss.session.id: ss for ss in state.active}
    for sid, amount in allocation.entries:
        if sid not in by_id:
            raise ContractViolation(
                f"allocation pays session {sid!r} which is not active at slot {state.slot}"
            )
        ss = by_id[sid]
        if amount < -ENERGY_TOL:
            raise ContractViolation(f"negative allocation {amount} for session {sid!r}")
        cap = min(ss.session.peak_rate, ss.remaining_energy)
        if amount > cap + ENERGY_TOL:
            raise ContractViolation(
                f"allocation {amount} for session {sid!r} exceeds "
                f"min(peak_rate, remaining) = {cap}"
            )

    next_slot = state.slot + 1
    survivors = []
    unmet = list(state.unmet)
    for ss in state.active:
        remaining = max(0.0, ss.remaining_energy - allocation.get(ss.session.id))
        if ss.session.departure == state.slot:
            if remaining > ENERGY_TOL:
                unmet.append((ss.session.id, remaining))
        else:
            survivors.append(SessionState(ss.session, remaining, next_slot))
    arriving = [s for s in state.pending if s.arrival == next_slot]
    survivors.extend(SessionState(s, s.energy, next_slot) for s in arriving)
    survivors.sort(key=lambda ss: ss.session.id)
    pending = tuple(s for s in state.pending if s.arrival > next_slot)
    return AggregatorState(
        slot=next_slot,
        active=tuple(survivors),
        pending=pending,
        unmet=tuple(unmet),
    )


@dataclass(frozen=True)
class Violation:
    """The first broken constraint of a trajectory."""

    kind: str  # "peak" | "ramp" | "tracking" | "unmet_demand"
    slot: int
    detail: str


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool
    violation: Violation | None = None


def check_trajectory(instance: Instance, policy, trajectory) -> FeasibilityVerdict:
    """Run the policy forward over a full trajectory and judge feasibility.

    The trajectory must contain exactly ``horizon`` grid levels.  Checks per
    slot, in order: peak limit, ramp limit, exact tracking (slots with no
    active session carry no tracking obligation), and demands met at every
    departure.  The first violation is reported with its slot.

    ``policy`` may be a PolicyKind, a policy name, or a policy object.
    """
    from .policy import get_policy

    pol = get_policy(policy)
    trajectory = tuple(float(x) for x in trajectory)
    if len(trajectory) != instance.horizon:
        raise ValidationError(
            f"trajectory has {len(trajectory)} entries, expected horizon {instance.horizon}"
        )
    for x in trajectory:
        instance.grid.index_of(x)  # raises ValidationError if off-grid

    cons = instance.constraints
    state = initial_state(instance)
    previous = cons.initial_signal
    for t, x in enumerate(trajectory, start=1):
        broken = cons.violation(x, previous)
        if broken == "peak":
            return FeasibilityVerdict(
                False, Violation("peak", t, f"signal {x} exceeds peak limit {cons.peak_limit}")
            )
        if broken == "ramp":
            return FeasibilityVerdict(
                False,
                Violation(
                    "ramp", t, f"|{x} - {previous}| exceeds ramp limit {cons.ramp_limit}"
                ),
            )
        alloc = pol.allocate(state, x)
        if state.has_active and abs(alloc.total - x) > ENERGY_TOL:
            return FeasibilityVerdict(
                False,
                Violation(
                    "tracking",
                    t,
                    f"delivered {alloc.total} for signal {x} (shortfall {x - alloc.total})",
                ),
            )
        new_state = step_state(state, alloc)
        if len(new_state.unmet) > len(state.unmet):
            missed = new_state.unmet[len(state.unmet):]
            ids = ", ".join(f"{sid}({amt})" for sid, amt in missed)
            return FeasibilityVerdict(
                False, Violation("unmet_demand", t, f"departed with demand left: {ids}")
            )
        state = new_state
        previous = x
    return FeasibilityVerdict(True, None)
