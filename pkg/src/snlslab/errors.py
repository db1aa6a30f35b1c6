"""Exception hierarchy shared by every module."""


class SNLSError(Exception):
    """Base class for all package errors."""


class ContractViolation(SNLSError):
    """An argument is in the wrong representation or otherwise breaks a precondition."""


class DomainError(SNLSError, ValueError):
    """A numeric argument lies outside the admissible range."""


class BudgetError(SNLSError):
    """A step, sample or grid budget would be exceeded."""


class FitError(SNLSError):
    """The scaling fit cannot be performed on the given estimates."""


class ConfigError(SNLSError):
    """An experiment config file is malformed or inconsistent."""
