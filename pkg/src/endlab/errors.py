"""Exception hierarchy shared by every module."""

from __future__ import annotations


class EndlabError(Exception):
    """Base class for all errors raised by endlab."""


class SpecificationError(EndlabError, ValueError):
    """Invalid group, measure or experiment specification.

    ``violations`` lists every problem found, each prefixed with its location.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class BudgetExceeded(EndlabError, RuntimeError):
    """A configured resource budget would be exceeded.

    ``partial`` carries whatever was computed before the budget was hit and
    ``feasible`` the largest parameter value that fits (when known).
    """

    def __init__(self, message, partial=None, feasible=None):
        super().__init__(message)
        self.partial = partial
        self.feasible = feasible


class PreconditionError(EndlabError, ValueError):
    """An operation was called outside its documented domain."""


class InternalConsistencyError(EndlabError, AssertionError):
    """Two routes that must agree did not."""
