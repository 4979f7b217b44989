"""Exception hierarchy shared by all lyaplab modules.

Two families matter to callers (and to the command line front end):

* :class:`ValidationError` and its subclasses signal inputs outside the
  domain of an operation.  The CLI maps them to exit code 2.
* :class:`ToleranceNotMet` and :class:`BudgetTooSmall` signal that a
  numerical or Monte Carlo budget was exhausted before the requested
  accuracy was reached.  The CLI maps them to exit code 3.
"""


class LyapLabError(Exception):
    """Base class for every error raised by the package."""


# -- domain / validation errors ---------------------------------------------

class ValidationError(LyapLabError, ValueError):
    """Input violates the precondition of an operation."""


class NonPositiveArgument(ValidationError):
    pass


class NonPositivePoint(ValidationError):
    pass


class PoleArgument(ValidationError):
    pass


class InvalidOrder(ValidationError):
    pass


class OutOfRange(ValidationError):
    pass


class PoleOfCoefficient(ValidationError):
    pass


class GridTooNarrow(ValidationError):
    pass


class ArgumentTooLarge(ValidationError):
    pass


class WrongHalfPlane(ValidationError):
    pass


class PoleCollision(ValidationError):
    pass


class NearPole(ValidationError):
    pass


class DegenerateDisorder(ValidationError):
    pass


class Degenerate(ValidationError):
    pass


class StepTooLarge(ValidationError):
    pass


# -- numerical failures -----------------------------------------------------

class NumericalError(LyapLabError, ArithmeticError):
    """A numerical procedure could not deliver its contract."""


class ToleranceNotMet(NumericalError):
    pass


class StepTooSmall(NumericalError):
    pass


class BracketFailure(NumericalError):
    pass


class NoRootInBracket(NumericalError):
    pass


class PrecisionLoss(NumericalError):
    pass


class BudgetTooSmall(NumericalError):
    pass


class HypothesisViolated(NumericalError):
    pass
