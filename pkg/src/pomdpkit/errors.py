"""Exception hierarchy.

Input problems derive from :class:`InputError` (also a ``ValueError``);
numerical breakdowns derive from :class:`NumericalError`.  The CLI maps the
two families to different exit codes.
"""


class PomdpKitError(Exception):
    pass


class InputError(PomdpKitError, ValueError):
    pass


class NumericalError(PomdpKitError, ArithmeticError):
    pass


# markov-core
class NonSquare(InputError):
    pass


class NegativeEntry(InputError):
    pass


class RowSumOutOfTolerance(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class NonUniqueStationary(NumericalError):
    pass


# stochastic orders
class OrderViolation(InputError):
    pass


# filtering
class ZeroLikelihood(NumericalError):
    pass


class TooLarge(InputError):
    pass


class MissingLevels(InputError):
    pass


class DegenerateBound(NumericalError):
    pass


# social learning
class NotUpperTriangular(InputError):
    pass


# change detection
class UndefinedLikelihoodRatio(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


# belief-grid dynamic programming
class GridTooCoarse(InputError):
    pass


class ParameterOutOfRange(InputError):
    pass


class NotStoppingProblem(InputError):
    pass


class BudgetExceedsHorizon(InputError):
    pass


# games
class InertiaTooSmall(InputError):
    pass


class UnboundedDensity(InputError):
    pass


class LpFailure(NumericalError):
    """An LP that must have an optimum came back infeasible or unbounded."""


class DegenerateState(NumericalError):
    """A state carries no occupation measure, so its dual policy is undefined."""


# discrete optimisation
class DegenerateBounds(InputError):
    pass


# online estimation
class SingularInformation(NumericalError):
    pass


# cli
class UnknownScenario(PomdpKitError):
    pass


class ConfigValidation(InputError):
    def __init__(self, pointer, message):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")
