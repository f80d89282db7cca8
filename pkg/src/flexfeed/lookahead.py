"""Bounded-depth approximations of the exact feedback.

Instead of counting feasible completions over the whole remaining horizon,
the k-step approximation counts extensions of the next k slots and takes
ratios of those counts.  At full remaining depth it reproduces the exact
feedback; at depth 1 it is uniform over the currently feasible levels.

Two notions of "feasible extension" are supported.  The default ("exact")
requires an extension to be completable into a full feasible trajectory.
The cheaper "interval" notion only requires every step to stay inside the
per-slot admissible interval, which is what makes depth-1 feedback usable
at scales where completion checks are too expensive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DeadEnd, ValidationError
from .model import ENERGY_TOL, AggregatorState, Instance
from .feedback import FeedbackVector, _exists_from, replay_prefix
from .policy import expand_feasible, get_policy

_S1_MODES = ("exact", "interval")


@dataclass(frozen=True)
class LookaheadConfig:
    """Depth and extension notion for approximate feedback."""

    depth: int
    s1_mode: str = "exact"

    def __post_init__(self):
        problems = []
        if not isinstance(self.depth, int) or self.depth < 1:
            problems.append(f"depth must be an integer >= 1, got {self.depth!r}")
        if self.s1_mode not in _S1_MODES:
            problems.append(f"s1_mode must be one of {_S1_MODES}, got {self.s1_mode!r}")
        if problems:
            raise ValidationError(problems)


def _check_s1_mode(s1_mode: str) -> bool:
    if s1_mode not in _S1_MODES:
        raise ValidationError(f"s1_mode must be one of {_S1_MODES}, got {s1_mode!r}")
    return s1_mode == "exact"


def _count_k_from(
    instance: Instance,
    pol,
    state: AggregatorState,
    previous: float,
    k: int,
    exact: bool,
) -> int:
    if k == 0:
        if not exact:
            return 1
        return 1 if _exists_from(instance, pol, state, previous) else 0
    total = 0
    for x, child in expand_feasible(pol, state, instance.grid, instance.constraints, previous):
        total += _count_k_from(instance, pol, child, x, k - 1, exact)
    return total


def count_k_feasible(
    instance: Instance,
    policy,
    prefix=(),
    k: int = 1,
    *,
    s1_mode: str = "exact",
) -> int:
    """Number of k-slot extensions of the prefix that remain viable.

    ``k`` is silently capped at the remaining horizon; at the cap the count
    equals the number of feasible completions.  A prefix that is already
    broken or unservable counts zero.
    """
    if not isinstance(k, int) or k < 1:
        raise ValidationError(f"k must be an integer >= 1, got {k!r}")
    exact = _check_s1_mode(s1_mode)
    pol = get_policy(policy)
    prefix = tuple(float(x) for x in prefix)
    if len(prefix) >= instance.horizon:
        raise ValidationError(
            f"prefix has {len(prefix)} entries, expected fewer than horizon "
            f"{instance.horizon}"
        )
    ps = replay_prefix(instance, pol, prefix)
    if ps.status != "ok":
        return 0
    k_eff = min(k, instance.horizon - len(prefix))
    return _count_k_from(instance, pol, ps.state, ps.previous_signal, k_eff, exact)


def approx_feedback(
    instance: Instance,
    policy,
    prefix=(),
    depth: int = 1,
    *,
    s1_mode: str = "exact",
) -> FeedbackVector:
    """Depth-limited feedback for the next slot.

    Level probabilities are the k-step extension counts through each level
    divided by their sum, the count one step shallower so that the column
    sums match the denominator recursion.  With depth at least the
    remaining horizon this equals the exact feedback.
    """
    if not isinstance(depth, int) or depth < 1:
        raise ValidationError(f"depth must be an integer >= 1, got {depth!r}")
    exact = _check_s1_mode(s1_mode)
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
    k_eff = min(depth, instance.horizon - len(prefix))
    counts = [0] * len(instance.grid.levels)
    if ps.status == "ok":
        for x, child in expand_feasible(
            pol, ps.state, instance.grid, instance.constraints, ps.previous_signal
        ):
            counts[instance.grid.index_of(x)] = _count_k_from(
                instance, pol, child, x, k_eff - 1, exact
            )
    total = sum(counts)
    if total == 0:
        raise DeadEnd(
            f"no viable extension from prefix {prefix} at depth {k_eff}",
            prefix=prefix,
            slot=slot,
            reason="no_feasible_completion",
        )
    return FeedbackVector(
        grid=instance.grid,
        probabilities=tuple(c / total for c in counts),
        counts=tuple(counts),
        mode="lookahead",
        depth=k_eff,
    )


def one_step_feasible(
    instance: Instance,
    policy,
    state: AggregatorState,
    previous_signal: float | None = None,
    *,
    mode: str = "exact",
) -> tuple[float, ...]:
    """Grid levels usable at the state's slot, in ascending order.

    ``mode="exact"`` keeps a level only when a feasible completion exists
    after it.  ``mode="interval"`` keeps every level inside the per-slot
    admissible interval (clipped by peak and ramp limits), which is a
    superset of the exact answer and much cheaper to compute.
    """
    if mode not in ("exact", "interval"):
        raise ValidationError(f"mode must be 'exact' or 'interval', got {mode!r}")
    pol = get_policy(policy)
    cons = instance.constraints
    if previous_signal is None:
        if state.slot == 1:
            previous_signal = cons.initial_signal
        elif cons.ramp_limit is not None:
            raise ValidationError(
                "previous_signal is required beyond slot 1 when a ramp limit is set"
            )
        else:
            previous_signal = 0.0
    children = expand_feasible(pol, state, instance.grid, cons, previous_signal)
    if mode == "interval":
        return tuple(x for x, _ in children)
    return tuple(
        x for x, child in children if _exists_from(instance, pol, child, x)
    )


@dataclass(frozen=True)
class GuardReport:
    """Which always-completable conditions hold for an instance.

    When ``holds`` is true and the operator only ever picks levels with
    positive feedback, no run can reach a dead end: a grid level at least
    as large as the sum of peak rates can absorb any backlog, and sessions
    arriving with nonnegative slack never need it immediately.
    """

    capacity_condition: bool
    arrival_laxity_condition: bool
    operator_note: str
    holds: bool
    details: tuple[str, ...]


def check_guard_conditions(instance: Instance, state: AggregatorState | None = None) -> GuardReport:
    """Evaluate the dead-end guard conditions.

    With a state given, only sessions that have not yet departed are
    considered; otherwise the whole instance is.
    """
    if state is None:
        sessions = list(instance.sessions)
    else:
        sessions = [ss.session for ss in state.active] + list(state.pending)
    details = []
    rate_sum = sum(s.peak_rate for s in sessions)
    capacity_ok = True
    if not instance.constraints.unconstrained:
        capacity_ok = False
        details.append("peak or ramp limits are configured on the signal")
    if instance.grid.max_level < rate_sum - ENERGY_TOL:
        capacity_ok = False
        details.append(
            f"largest grid level {instance.grid.max_level} is below the "
            f"sum of peak rates {rate_sum}"
        )
    laxity_ok = True
    for s in sessions:
        arrival_laxity = (s.departure - s.arrival) - s.energy / s.peak_rate
        if arrival_laxity < -ENERGY_TOL:
            laxity_ok = False
            details.append(
                f"session {s.id!r} arrives with negative slack {arrival_laxity}"
            )
    return GuardReport(
        capacity_condition=capacity_ok,
        arrival_laxity_condition=laxity_ok,
        operator_note=(
            "selecting only levels with positive feedback probability is the "
            "operator's job; both built-in operators do so"
        ),
        holds=capacity_ok and laxity_ok,
        details=tuple(details),
    )
