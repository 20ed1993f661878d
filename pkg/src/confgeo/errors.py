"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`ConfgeoError`.
Two families exist so the command line can map failures to exit codes:
:class:`InputError` (malformed expressions, files, parameters) and
:class:`NumericalError` (the computation hit a singular configuration).
"""


class ConfgeoError(Exception):
    """Base class for all package errors."""


class InputError(ConfgeoError, ValueError):
    """Invalid user input."""


class NumericalError(ConfgeoError, ArithmeticError):
    """A computation reached a singular or degenerate configuration."""


# metric expression language

class ExpressionSyntaxError(InputError):
    def __init__(self, message, position=None, source=None):
        self.position = position
        self.source = source
        where = "" if position is None else f" at position {position}"
        super().__init__(f"{message}{where}")


class UnknownIdentifier(InputError):
    def __init__(self, name, position=None):
        self.name = name
        self.position = position
        where = "" if position is None else f" at position {position}"
        super().__init__(f"unknown identifier {name!r}{where}")


class ArityError(InputError):
    def __init__(self, func, nargs):
        self.func = func
        self.nargs = nargs
        super().__init__(f"{func}() takes exactly 1 argument ({nargs} given)")


class DomainError(NumericalError):
    """An elementary function was evaluated outside its domain."""

    def __init__(self, message, subexpression=None):
        self.message = message
        self.subexpression = subexpression
        text = message if subexpression is None else f"{message} in {subexpression}"
        super().__init__(text)


class OrderTooHigh(InputError):
    pass


class UnknownBuiltin(InputError):
    pass


class MissingParam(InputError):
    pass


class MetricFileError(InputError):
    pass


# geometry

class DegenerateMetric(NumericalError):
    pass


class NegativeGram(NumericalError):
    pass


# curves and integration

class NullVelocity(NumericalError):
    pass


class ConstraintViolated(NumericalError):
    pass


class StepFailure(NumericalError):
    pass


class ConstraintDrift(NumericalError):
    pass


class NonMonotone(InputError):
    pass


class DegenerateCurve(NumericalError):
    pass


class ChartSingularity(NumericalError):
    pass


class ConformalDegenerate(NumericalError):
    pass


class StencilTooShort(InputError):
    pass


class NotUnitSpeed(InputError):
    pass


class ProjectionDegenerate(NumericalError):
    pass
