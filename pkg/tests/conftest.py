"""Shared fixtures and brute-force reference implementations.

The reference routines here deliberately avoid the library's pruned
depth-first search: they enumerate the full signal-level product and judge
each trajectory with the public checker, so library counts and sets can be
validated against an independent route.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from flexfeed import (
    Allocation,
    Instance,
    OperationalConstraints,
    SchedulingPolicy,
    Session,
    SignalGrid,
    check_trajectory,
)

QUANTUM = 0.25


class LastTakesAllAtMax(SchedulingPolicy):
    """Planted non-monotone policy: at the top grid level it reverses the
    service order, so raising the signal can reduce a session's share."""

    name = "planted"
    monotone = False

    def __init__(self, top_level: float):
        self.top_level = top_level

    def allocate(self, state, signal):
        order = sorted(state.active, key=lambda ss: ss.session.id)
        if signal >= self.top_level - 1e-9:
            order = list(reversed(order))
        left = max(0.0, float(signal))
        amounts = {ss.session.id: 0.0 for ss in state.active}
        for ss in order:
            give = min(ss.deliverable_now, left)
            amounts[ss.session.id] = give
            left -= give
        return Allocation(tuple(sorted(amounts.items())))


def make_toy() -> Instance:
    """Three slots, binary grid, one unit-demand session spanning the horizon."""
    return Instance(
        horizon=3,
        sessions=(Session("ev1", 1, 3, 1.0, 1.0),),
        grid=SignalGrid((0.0, 1.0)),
    )


@pytest.fixture
def toy() -> Instance:
    return make_toy()


def brute_feasible_set(instance: Instance, policy) -> list[tuple[float, ...]]:
    """All feasible trajectories by exhaustive product over the grid."""
    return [
        traj
        for traj in itertools.product(instance.grid.levels, repeat=instance.horizon)
        if check_trajectory(instance, policy, traj).feasible
    ]


def brute_completions(instance: Instance, policy, prefix) -> list[tuple[float, ...]]:
    prefix = tuple(prefix)
    rest = instance.horizon - len(prefix)
    return [
        comp
        for comp in itertools.product(instance.grid.levels, repeat=rest)
        if check_trajectory(instance, policy, prefix + comp).feasible
    ]


def brute_one_step(instance: Instance, policy, prefix) -> list[float]:
    """Levels extendable to a feasible trajectory, by exhaustive search."""
    prefix = tuple(prefix)
    return [
        x
        for x in instance.grid.levels
        if brute_completions(instance, policy, prefix + (x,))
    ]


def random_instance(
    seed: int,
    *,
    min_horizon: int = 2,
    max_horizon: int = 4,
    max_levels: int = 3,
    max_sessions: int = 3,
    allow_constraints: bool = False,
    quantum: float = QUANTUM,
    max_rate_units: int = 6,
    max_energy_units: int | None = None,
) -> Instance:
    """Draw a small instance with all quantities on the given quantum."""
    rng = np.random.default_rng(seed)
    horizon = int(rng.integers(min_horizon, max_horizon + 1))
    n_levels = int(rng.integers(2, max_levels + 1))
    pool = [round(i * quantum, 10) for i in range(0, int(round(2.0 / quantum)) + 1)]
    picks = rng.choice(len(pool), size=n_levels, replace=False)
    levels = {pool[i] for i in picks}
    if rng.random() < 0.85:
        levels.add(0.0)
    while len(levels) < 2:
        levels.add(max(levels) + quantum)
    grid = SignalGrid(tuple(sorted(levels)))

    sessions = []
    n_sessions = int(rng.integers(1, max_sessions + 1))
    for j in range(n_sessions):
        arrival = int(rng.integers(1, horizon + 1))
        departure = int(rng.integers(arrival, horizon + 1))
        rate = int(rng.integers(1, max_rate_units + 1)) * quantum
        window = departure - arrival + 1
        cap_units = int(round(rate * window / quantum))
        if max_energy_units is not None:
            cap_units = min(cap_units, max_energy_units)
        energy = int(rng.integers(1, cap_units + 1)) * quantum
        sessions.append(Session(f"s{j}", arrival, departure, energy, rate))

    constraints = OperationalConstraints()
    if allow_constraints:
        peak = None
        ramp = None
        init = 0.0
        if rng.random() < 0.35 and len(grid.levels) > 1:
            peak = float(grid.levels[int(rng.integers(1, len(grid.levels)))])
        if rng.random() < 0.35:
            ramp = float(int(rng.integers(1, 7))) * quantum
            if rng.random() < 0.3:
                init = float(grid.levels[int(rng.integers(0, len(grid.levels)))])
        constraints = OperationalConstraints(
            peak_limit=peak, ramp_limit=ramp, initial_signal=init
        )
    return Instance(
        horizon=horizon, sessions=tuple(sessions), grid=grid, constraints=constraints
    )


def feasible_prefixes(members: list[tuple[float, ...]], horizon: int) -> list[tuple[float, ...]]:
    """Distinct proper prefixes of the feasible trajectories, shortest first."""
    seen = []
    known = set()
    for t in range(0, horizon):
        for m in members:
            p = m[:t]
            if p not in known:
                known.add(p)
                seen.append(p)
    return seen
