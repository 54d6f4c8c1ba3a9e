"""Exception hierarchy.

Every error carries a stable ``code`` used by the CLI for its error JSON and
for the exit-status table.
"""


class RqdiffError(Exception):
    code = "RqdiffError"
    exit_status = 1


class InvalidParameters(RqdiffError, ValueError):
    code = "InvalidParameters"
    exit_status = 10


class DegenerateDenominator(RqdiffError, ZeroDivisionError):
    code = "DegenerateDenominator"
    exit_status = 11


class NegativeArgument(RqdiffError, ValueError):
    code = "NegativeArgument"
    exit_status = 12


class BadGrid(RqdiffError, ValueError):
    code = "BadGrid"
    exit_status = 13


class NonIntegrableWeight(RqdiffError, ValueError):
    code = "NonIntegrableWeight"
    exit_status = 14


class OutOfDomain(RqdiffError, ValueError):
    code = "OutOfDomain"
    exit_status = 15


class OriginSingularity(RqdiffError, ArithmeticError):
    code = "OriginSingularity"
    exit_status = 16


class MissingDerivative(RqdiffError, ValueError):
    code = "MissingDerivative"
    exit_status = 17


class StartupFailure(RqdiffError, ArithmeticError):
    code = "StartupFailure"
    exit_status = 18


class StepFailure(RqdiffError, ArithmeticError):
    code = "StepFailure"
    exit_status = 19


class NoCrossing(RqdiffError, ArithmeticError):
    code = "NoCrossing"
    exit_status = 20


class PositivityViolated(RqdiffError, ValueError):
    code = "PositivityViolated"
    exit_status = 21


class SigmaOutOfRange(RqdiffError, ValueError):
    code = "SigmaOutOfRange"
    exit_status = 22


class NonDifferentiableFamily(RqdiffError, ValueError):
    code = "NonDifferentiableFamily"
    exit_status = 23


class GammaOutOfRange(RqdiffError, ValueError):
    code = "GammaOutOfRange"
    exit_status = 24


class ThresholdMismatch(RqdiffError, ValueError):
    code = "ThresholdMismatch"
    exit_status = 25


class TrivialProfile(RqdiffError, ValueError):
    code = "TrivialProfile"
    exit_status = 26


class ParseError(RqdiffError, ValueError):
    code = "ParseError"
    exit_status = 4


class ValidationError(RqdiffError, ValueError):
    code = "ValidationError"
    exit_status = 5


class IncompleteGrid(RqdiffError, ValueError):
    code = "IncompleteGrid"
    exit_status = 27


class NotConverged(RqdiffError, ArithmeticError):
    code = "NotConverged"
    exit_status = 28
