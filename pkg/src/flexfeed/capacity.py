"""Monte Carlo capacity estimation and run-level delivery metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DeadEnd, ValidationError
from .feedback import entropy
from .model import Instance
from .operators import sample_signal
from .policy import get_policy


@dataclass(frozen=True)
class CapacityEstimate:
    """Sample mean of per-trajectory entropy sums.

    Trajectories are drawn by following the feedback itself, so the mean
    converges to the log-count of feasible trajectories.  ``dead_ends``
    counts trajectories an approximate feedback source could not finish;
    their partial sums are still included.
    """

    mean: float
    std_error: float
    per_trajectory: tuple[float, ...]
    n_trajectories: int
    dead_ends: int = 0


def estimate_capacity(
    instance: Instance,
    policy,
    feedback_source,
    n_trajectories: int,
    rng=None,
    *,
    log_base: float = 2.0,
) -> CapacityEstimate:
    """Estimate capacity by sampling signals from the feedback.

    ``feedback_source`` needs a ``vector(instance, policy, prefix, cache=...)``
    method and a ``mode`` attribute; see the engine module for the built-in
    sources.  Each trajectory gets its own random substream, so results
    depend only on the seed, not on evaluation order.

    Raises DeadEnd when the instance has no feasible trajectory at all.
    With an exact source a dead end later in a trajectory is impossible and
    raises ContractViolation; approximate sources have the trajectory
    flagged and its partial entropy recorded instead.
    """
    if not isinstance(n_trajectories, int) or n_trajectories < 1:
        raise ValidationError(
            f"n_trajectories must be an integer >= 1, got {n_trajectories!r}"
        )
    pol = get_policy(policy)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    streams = rng.spawn(n_trajectories)
    cons = instance.constraints
    new_cache = getattr(feedback_source, "new_cache", None)
    per = []
    dead_ends = 0
    for stream in streams:
        cache = new_cache(instance) if new_cache is not None else None
        prefix: list[float] = []
        previous = cons.initial_signal
        acc = 0.0
        for t in range(1, instance.horizon + 1):
            try:
                fv = feedback_source.vector(instance, pol, tuple(prefix), cache=cache)
                acc += entropy(fv, log_base)
                x = sample_signal(fv, stream, slot=t, previous_signal=previous, constraints=cons)
            except DeadEnd:
                if feedback_source.mode == "exact":
                    if t == 1:
                        raise
                    raise ContractViolation(
                        "exact feedback hit a dead end mid-trajectory; "
                        "this should be impossible"
                    ) from None
                dead_ends += 1
                break
            prefix.append(x)
            previous = x
        per.append(acc)
    mean = sum(per) / len(per)
    if len(per) > 1:
        var = sum((v - mean) ** 2 for v in per) / (len(per) - 1)
        std_error = math.sqrt(var / len(per))
    else:
        std_error = 0.0
    return CapacityEstimate(
        mean=mean,
        std_error=std_error,
        per_trajectory=tuple(per),
        n_trajectories=n_trajectories,
        dead_ends=dead_ends,
    )


def _as_runs(runs) -> list:
    runs = list(runs)
    if not runs:
        raise ValidationError("at least one run is required")
    horizon = len(runs[0].signals)
    for r in runs:
        if len(r.signals) != horizon:
            raise ValidationError("all runs must share the same horizon")
    return runs


def tracking_mse(runs) -> float:
    """Mean squared gap between delivered totals and signals, over all slots of all runs."""
    runs = _as_runs(runs)
    horizon = len(runs[0].signals)
    total = 0.0
    for r in runs:
        for x, delivered in zip(r.signals, r.delivered_per_slot):
            total += (delivered - x) ** 2
    return total / (len(runs) * horizon)


@dataclass(frozen=True)
class DeliveryMetrics:
    """Two views of delivery shortfall over a batch of runs.

    ``per_slot_delivered_ratio`` is total delivered energy divided by
    (runs * slots * total demand); note this is a per-slot delivery rate,
    not a shortfall, and equals 1/horizon when everything is delivered.
    ``undelivered_fraction`` is the mean over runs of the fraction of
    demand left unserved.
    """

    per_slot_delivered_ratio: float
    undelivered_fraction: float


def undelivered_mpe(runs) -> DeliveryMetrics:
    """Delivery metrics for runs of a single instance; demand must be positive."""
    runs = _as_runs(runs)
    horizon = len(runs[0].signals)
    demand = runs[0].instance.total_demand
    for r in runs:
        if abs(r.instance.total_demand - demand) > 1e-9:
            raise ValidationError("all runs must come from the same instance demand")
    if demand <= 0.0:
        raise ValidationError("total demand must be positive for delivery metrics")
    delivered_total = 0.0
    fractions = []
    for r in runs:
        delivered = sum(r.delivered_per_slot)
        delivered_total += delivered
        fractions.append(max(0.0, 1.0 - delivered / demand))
    ratio = delivered_total / (len(runs) * horizon * demand)
    return DeliveryMetrics(
        per_slot_delivered_ratio=ratio,
        undelivered_fraction=sum(fractions) / len(fractions),
    )
