"""Probabilistic flexibility feedback for aggregated deferrable loads.

The package models a fleet of charging sessions steered by per-slot signal
levels, computes exact or depth-limited feedback distributions over the
next signal, and closes the loop with operator-side selection, capacity
estimation, and tracking metrics.
"""

from .capacity import (
    CapacityEstimate,
    DeliveryMetrics,
    estimate_capacity,
    tracking_mse,
    undelivered_mpe,
)
from .engine import (
    ExactFeedback,
    LookaheadFeedback,
    RhcOperator,
    SamplerOperator,
    SessionGeneratorParams,
    SimConfig,
    SimResult,
    generate_sessions,
    run_closed_loop,
)
from .errors import ContractViolation, DeadEnd, InfeasibleStateError, ValidationError
from .feedback import (
    FeedbackVector,
    count_feasible,
    entropy,
    enumerate_feasible,
    joint_probability,
    optimal_feedback,
    replay_prefix,
    system_capacity,
)
from .lookahead import (
    GuardReport,
    LookaheadConfig,
    approx_feedback,
    check_guard_conditions,
    count_k_feasible,
    one_step_feasible,
)
from .model import (
    AggregatorState,
    Allocation,
    FeasibilityVerdict,
    Instance,
    OperationalConstraints,
    Session,
    SessionState,
    SignalGrid,
    Violation,
    check_trajectory,
    initial_state,
    step_state,
)
from .operators import CostCurve, OperatorDecision, evaluate_cost, rhc_select, sample_signal
from .policy import (
    IntervalBounds,
    MonotonicityReport,
    PolicyKind,
    SchedulingPolicy,
    allocate,
    expand_feasible,
    get_policy,
    interval_bounds,
    laxity,
    monotonicity_check,
)

__version__ = "0.1.0"

__all__ = [
    "AggregatorState",
    "Allocation",
    "CapacityEstimate",
    "ContractViolation",
    "CostCurve",
    "DeadEnd",
    "DeliveryMetrics",
    "ExactFeedback",
    "FeasibilityVerdict",
    "FeedbackVector",
    "GuardReport",
    "Instance",
    "IntervalBounds",
    "InfeasibleStateError",
    "LookaheadConfig",
    "LookaheadFeedback",
    "MonotonicityReport",
    "OperationalConstraints",
    "OperatorDecision",
    "PolicyKind",
    "RhcOperator",
    "SamplerOperator",
    "SchedulingPolicy",
    "Session",
    "SessionGeneratorParams",
    "SessionState",
    "SignalGrid",
    "SimConfig",
    "SimResult",
    "ValidationError",
    "Violation",
    "allocate",
    "approx_feedback",
    "check_guard_conditions",
    "check_trajectory",
    "count_feasible",
    "count_k_feasible",
    "enumerate_feasible",
    "entropy",
    "estimate_capacity",
    "evaluate_cost",
    "expand_feasible",
    "generate_sessions",
    "get_policy",
    "initial_state",
    "interval_bounds",
    "joint_probability",
    "laxity",
    "monotonicity_check",
    "one_step_feasible",
    "optimal_feedback",
    "replay_prefix",
    "rhc_select",
    "run_closed_loop",
    "sample_signal",
    "step_state",
    "system_capacity",
    "tracking_mse",
    "undelivered_mpe",
    "__version__",
]
