"""Exception types shared across hoferlab."""

import numpy as np


class ContractViolation(ValueError):
    """An operation was called with arguments outside its contract."""


class NumericDomainError(ArithmeticError):
    """A value that must be finite (gradient, bracket, field) was not."""


class IntegrationError(RuntimeError):
    """ODE integration failed; carries the time and state where it stopped."""

    def __init__(self, message, t=None, x=None):
        self.t = t
        self.x = None if x is None else np.asarray(x)
        where = "" if t is None else f" at t={t:.6g}"
        super().__init__(message + where)


class UnsupportedGeometry(NotImplementedError):
    """The requested computation is only implemented for built-in geometries."""
