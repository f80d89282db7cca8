"""Shared exception types."""

from __future__ import annotations


class ValidationError(ValueError):
    """Raised when an input object or file violates its documented invariants.

    Collects every detected problem so callers can report them all at once
    instead of fixing one field at a time.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = [str(p) for p in problems]
        super().__init__("; ".join(self.problems))


class ContractViolation(RuntimeError):
    """An internal call broke a documented precondition (a bug, not bad input)."""


class InfeasibleStateError(RuntimeError):
    """A state admits no admissible signal at all (empty feasible interval)."""


class DeadEnd(RuntimeError):
    """A signal prefix admits no feasible continuation.

    ``reason`` distinguishes a prefix that already violated a constraint
    ("already_infeasible") from one that is still clean but cannot be
    completed ("no_feasible_completion").
    """

    def __init__(self, message, *, prefix=(), slot=None, reason="no_feasible_completion"):
        super().__init__(message)
        self.prefix = tuple(prefix)
        self.slot = slot
        self.reason = reason
