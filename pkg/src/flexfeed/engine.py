"""Closed-loop simulation and synthetic session generation.

One run alternates, slot by slot: the aggregator publishes feedback for
the next signal, the operator picks a level (receding-horizon rule or
sampling), the aggregator disaggregates it and the state advances.  The
emitted trajectory is then re-checked independently from scratch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .feedback import _CountCache, entropy, optimal_feedback
from .lookahead import approx_feedback
from .model import (
    Allocation,
    FeasibilityVerdict,
    Instance,
    Session,
    check_trajectory,
    initial_state,
    step_state,
)
from .operators import CostCurve, evaluate_cost, rhc_select, sample_signal
from .policy import get_policy


@dataclass(frozen=True)
class ExactFeedback:
    """Feedback source backed by exact completion counting.

    ``cache_quantum`` enables the exact-state count cache for instances
    whose energies all lie on that quantum.
    """

    cache_quantum: float | None = None
    mode = "exact"

    def new_cache(self, instance: Instance):
        if self.cache_quantum is None:
            return None
        return _CountCache(instance, float(self.cache_quantum))

    def vector(self, instance, policy, prefix, cache=None):
        return optimal_feedback(instance, policy, prefix, _cache=cache)


@dataclass(frozen=True)
class LookaheadFeedback:
    """Feedback source using depth-limited counting."""

    depth: int
    s1_mode: str = "exact"
    mode = "lookahead"

    def new_cache(self, instance: Instance):
        return None

    def vector(self, instance, policy, prefix, cache=None):
        return approx_feedback(instance, policy, prefix, self.depth, s1_mode=self.s1_mode)


@dataclass(frozen=True)
class RhcOperator:
    """Receding-horizon selection against a cost curve."""

    beta: float
    cost_curve: CostCurve


@dataclass(frozen=True)
class SamplerOperator:
    """Draw each signal from the feedback distribution.

    ``cost_curve`` is optional and only used to price the emitted
    trajectory for reporting.
    """

    cost_curve: CostCurve | None = None


@dataclass(frozen=True)
class SimConfig:
    instance: Instance
    policy: object
    feedback: object = ExactFeedback()
    operator: object = SamplerOperator()
    seed: int = 0
    record_feedback: bool = False
    log_base: float = 2.0

    def __post_init__(self):
        if isinstance(self.operator, RhcOperator) and self.operator.cost_curve is None:
            raise ValidationError("the receding-horizon operator needs a cost curve")


@dataclass(frozen=True)
class SimResult:
    """Everything observable from one closed-loop run."""

    instance: Instance
    policy_name: str
    signals: tuple[float, ...]
    allocations: tuple[Allocation, ...]
    feedback_entropies: tuple[float, ...]
    feedback_vectors: tuple | None
    total_cost: float
    verdict: FeasibilityVerdict
    unmet_energy: tuple[tuple[str, float], ...]
    tracking_mse: float
    undelivered_fraction: float
    seed: int

    @property
    def delivered_per_slot(self) -> tuple[float, ...]:
        return tuple(a.total for a in self.allocations)

    @property
    def feasible(self) -> bool:
        return self.verdict.feasible


def run_closed_loop(config: SimConfig) -> SimResult:
    """Run one closed-loop episode; DeadEnd propagates with its prefix."""
    instance = config.instance
    pol = get_policy(config.policy)
    cons = instance.constraints
    rng = np.random.default_rng(config.seed)
    cache = config.feedback.new_cache(instance)
    state = initial_state(instance)
    previous = cons.initial_signal
    signals: list[float] = []
    allocations: list[Allocation] = []
    entropies: list[float] = []
    vectors: list = []
    for t in range(1, instance.horizon + 1):
        fv = config.feedback.vector(instance, pol, tuple(signals), cache=cache)
        entropies.append(entropy(fv, config.log_base))
        if config.record_feedback:
            vectors.append(fv)
        if isinstance(config.operator, RhcOperator):
            decision = rhc_select(
                fv,
                config.operator.cost_curve,
                t,
                previous,
                cons,
                config.operator.beta,
                log_base=config.log_base,
            )
            x = decision.signal
        else:
            x = sample_signal(fv, rng, slot=t, previous_signal=previous, constraints=cons)
        alloc = pol.allocate(state, x)
        signals.append(x)
        allocations.append(alloc)
        state = step_state(state, alloc)
        previous = x

    verdict = check_trajectory(instance, pol, signals)
    delivered_by_session: dict[str, float] = {s.id: 0.0 for s in instance.sessions}
    for alloc in allocations:
        for sid, amount in alloc.entries:
            delivered_by_session[sid] += amount
    unmet = tuple(
        (s.id, max(0.0, s.energy - delivered_by_session[s.id]))
        for s in sorted(instance.sessions, key=lambda s: s.id)
    )
    curve = getattr(config.operator, "cost_curve", None)
    total_cost = evaluate_cost(curve, signals) if curve is not None else 0.0
    mse = sum(
        (a.total - x) ** 2 for a, x in zip(allocations, signals)
    ) / instance.horizon
    demand = instance.total_demand
    delivered_total = sum(a.total for a in allocations)
    undelivered = max(0.0, 1.0 - delivered_total / demand) if demand > 0 else 0.0
    return SimResult(
        instance=instance,
        policy_name=pol.name,
        signals=tuple(signals),
        allocations=tuple(allocations),
        feedback_entropies=tuple(entropies),
        feedback_vectors=tuple(vectors) if config.record_feedback else None,
        total_cost=total_cost,
        verdict=verdict,
        unmet_energy=unmet,
        tracking_mse=mse,
        undelivered_fraction=undelivered,
        seed=config.seed,
    )


@dataclass(frozen=True)
class SessionGeneratorParams:
    """Knobs for the synthetic session generator.

    Arrivals per slot are Poisson with the given rate, thinned to the
    stations currently free.  Stays are uniform integers, clipped at the
    horizon; energies are uniform reals, clipped so each session is
    servable in isolation.
    """

    horizon: int
    stations: int
    arrival_rate: float
    stay_min: int
    stay_max: int
    energy_min: float
    energy_max: float
    peak_rate: float

    def __post_init__(self):
        problems = []
        if not isinstance(self.horizon, int) or self.horizon < 1:
            problems.append(f"horizon must be an integer >= 1, got {self.horizon!r}")
        if not isinstance(self.stations, int) or self.stations < 1:
            problems.append(f"stations must be an integer >= 1, got {self.stations!r}")
        if not (self.arrival_rate >= 0.0):
            problems.append(f"arrival_rate must be >= 0, got {self.arrival_rate!r}")
        if not isinstance(self.stay_min, int) or not isinstance(self.stay_max, int):
            problems.append("stay bounds must be integers")
        elif not (0 <= self.stay_min <= self.stay_max):
            problems.append(
                f"need 0 <= stay_min <= stay_max, got {self.stay_min}..{self.stay_max}"
            )
        if not (0.0 < self.energy_min <= self.energy_max):
            problems.append(
                f"need 0 < energy_min <= energy_max, got "
                f"{self.energy_min}..{self.energy_max}"
            )
        if not (self.peak_rate > 0.0):
            problems.append(f"peak_rate must be positive, got {self.peak_rate!r}")
        if problems:
            raise ValidationError(problems)


def generate_sessions(params: SessionGeneratorParams, rng=None) -> list[Session]:
    """Draw a deterministic synthetic session list for the given seed."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    busy_until = [0] * params.stations
    sessions: list[Session] = []
    counter = 1
    for t in range(1, params.horizon + 1):
        free = [i for i in range(params.stations) if busy_until[i] < t]
        arrivals = min(int(rng.poisson(params.arrival_rate)), len(free))
        for k in range(arrivals):
            stay = int(rng.integers(params.stay_min, params.stay_max + 1))
            departure = min(t + stay, params.horizon)
            window = departure - t + 1
            energy = float(rng.uniform(params.energy_min, params.energy_max))
            energy = min(energy, params.peak_rate * window)
            sessions.append(
                Session(f"s{counter:03d}", t, departure, energy, params.peak_rate)
            )
            busy_until[free[k]] = departure
            counter += 1
    return sessions
