# sojourn/errors.py
"""
Exception hierarchy.

Every error belongs to one of three families; the CLI turns the family into
its exit code (validation 1, numerical 2, output 3).
"""


class SojournError(Exception):
    exit_code = 2


class ValidationFailure(SojournError):
    exit_code = 1


class NumericalFailure(SojournError):
    exit_code = 2


class OutputFailure(SojournError):
    exit_code = 3


# validation
class UnknownModel(ValidationFailure):
    pass


class ParamOutOfRange(ValidationFailure):
    pass


class OutsideChart(ValidationFailure):
    pass


class OutsideOverlap(ValidationFailure):
    pass


class ChartInvariantViolated(ValidationFailure):
    pass


class GridMismatch(ValidationFailure):
    pass


class CFLViolation(ValidationFailure):
    pass


class ScenarioParseError(ValidationFailure):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class ScenarioValidationError(ValidationFailure):
    def __init__(self, fields: list[str], message: str = "invalid scenario"):
        self.fields = list(fields)
        super().__init__(f"{message}: {', '.join(self.fields)}")


# numerical
class IntegratorFailure(NumericalFailure):
    pass


class NotAtBoundary(NumericalFailure):
    pass


class Trapped(NumericalFailure):
    pass


class LeftChart(NumericalFailure):
    """The geodesic runs to the boundary point at infinity of the half-space chart."""


class NoBranchFound(NumericalFailure):
    pass


class DegenerateAtTarget(NumericalFailure):
    pass


class DegenerateBranch(NumericalFailure):
    pass


class JacobianUnstable(NumericalFailure):
    pass


class CurvatureUnavailable(NumericalFailure):
    pass


class CountUnstable(NumericalFailure):
    pass


class GridTooCoarse(NumericalFailure):
    pass


class UnstableGrowth(NumericalFailure):
    pass


class EmptyTrace(NumericalFailure):
    pass


class AcceptanceFailed(NumericalFailure):
    pass
