"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class SurvLimeError(Exception):
    exit_code = 1


class UsageError(SurvLimeError, ValueError):
    exit_code = 2


class DataError(SurvLimeError, ValueError):
    """Invalid dataset, prediction matrix or model file."""

    exit_code = 3


class FitError(DataError):
    """Cox fitting failed. ``coefficients`` holds the last iterate when known."""

    def __init__(self, message, coefficients=None, iterations=None):
        super().__init__(message)
        self.coefficients = coefficients
        self.iterations = iterations


class SolverError(SurvLimeError, ArithmeticError):
    exit_code = 4


class AdapterError(SurvLimeError, RuntimeError):
    """The external black-box command broke the prediction protocol."""

    exit_code = 5

    def __init__(self, message, stderr=""):
        if stderr:
            message = f"{message}\n--- adapter stderr ---\n{stderr.rstrip()}"
        super().__init__(message)
        self.stderr = stderr
