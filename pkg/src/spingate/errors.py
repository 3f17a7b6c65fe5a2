"""Exception types raised across the package."""
from __future__ import annotations


class SpinGateError(Exception):
    """Base class for all package errors."""


class InvalidParameter(SpinGateError, ValueError):
    pass


class DegenerateFidelity(SpinGateError, ArithmeticError):
    """Both the empty and the coupled transmission channel are dark."""


class NonNormalizedInput(SpinGateError, ValueError):
    pass


class IndexOutOfRange(SpinGateError, IndexError):
    pass


class ZeroNormRegister(SpinGateError, ArithmeticError):
    pass


class UnknownLabel(SpinGateError, KeyError):
    pass


class WrongDimension(SpinGateError, ValueError):
    pass


class ShapeMismatch(SpinGateError, ValueError):
    pass


class KindMismatch(SpinGateError, TypeError):
    pass


class FrequencyMismatch(SpinGateError, ValueError):
    pass
