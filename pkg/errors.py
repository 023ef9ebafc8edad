"""
Errors Module

Exception types shared by the solver modules.
"""


class SwitchingRhcError(Exception):
    """Base class for all errors raised by this project"""


class InvalidArgumentError(SwitchingRhcError, ValueError):
    """Raised when an argument or configuration value is outside its domain"""


class NumericalFailureError(SwitchingRhcError, RuntimeError):
    """Raised when a factorization, linear solve or cost evaluation breaks down"""
