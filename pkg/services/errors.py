"""Exceptions raised by the toolkit services.

Validation errors mean the caller asked for something the operation does not
accept; numerical errors mean the computation ran but cannot be trusted.
"""


class ToolkitError(Exception):
    """Base class for every error raised by the services."""


class ValidationError(ToolkitError, ValueError):
    pass


class NumericalError(ToolkitError, ArithmeticError):
    pass


# measure
class NonUnitDirection(ValidationError):
    pass


class NegativeWeight(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NullMeasure(ValidationError):
    pass


class MassBoundExceeded(ValidationError):
    pass


class UnsupportedDimension(ValidationError):
    pass


# funcs
class UnknownFunction(ValidationError):
    pass


class BadParameter(ValidationError):
    pass


# quadrature
class BadExponent(ValidationError):
    pass


class Overflow(NumericalError):
    pass


class QuadratureUnderResolved(NumericalError):
    pass


# operator / meankernel
class NotC2AtPoint(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class NonfiniteValue(NumericalError):
    pass


# asymptotics
class UnboundedSupport(ValidationError):
    pass


class ResidualUnderflow(NumericalError):
    pass


# wos
class StartOutsideDomain(ValidationError):
    pass


class DegenerateRadius(ValidationError):
    pass


# cli
class ConfigParse(ValidationError):
    pass


class UnknownSubcommand(ValidationError):
    pass


class ToleranceExceeded(NumericalError):
    pass
