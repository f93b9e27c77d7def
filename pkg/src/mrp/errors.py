"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class MRPError(Exception):
    """Base class for errors raised by this package."""


class DomainError(MRPError, ValueError):
    """An argument lies outside the domain of the operation."""


class ChainError(MRPError, ValueError):
    """A parameter chain failed validation at construction."""


class NumericError(MRPError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        extra = ", ".join(f"{k}={v!r}" for k, v in self.diagnostics.items())
        return f"{base} ({extra})"


class DegenerateTargetError(MRPError, ValueError):
    """The target set has zero stationary mass where a positive one is required."""


class ConfigError(MRPError, ValueError):
    """An experiment configuration failed to parse or validate."""

    def __init__(self, message, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class BudgetExceededError(MRPError, RuntimeError):
    """A simulated path needed more renewals than the allowed budget."""

    def __init__(self, events: int, budget: int, horizon: float):
        self.events = events
        self.budget = budget
        self.horizon = horizon
        super().__init__(f"path passed {events} renewals before reaching t={horizon:g} (budget {budget})")
