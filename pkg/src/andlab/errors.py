"""Shared exception types."""


class AndlabError(Exception):
    """Base class for package errors."""


class BudgetExceededError(AndlabError):
    """An enumeration or scan would exceed its configured size budget."""


class NearResonantError(AndlabError):
    """A resolvent was requested at an energy too close to the spectrum."""


class SeparationError(AndlabError):
    """A geometric precondition (trajectory or pair separation) failed."""
