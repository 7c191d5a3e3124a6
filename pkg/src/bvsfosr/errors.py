"""Exception hierarchy shared by the package."""


class FOSRError(Exception):
    """Base class for all package errors."""


class ValidationError(FOSRError, ValueError):
    """Input data violates a documented invariant."""


class ConstantCovariate(ValidationError):
    def __init__(self, index, name=None):
        self.index = index
        label = f"{index}" if name is None else f"{index} ({name})"
        super().__init__(f"covariate {label} has zero sample standard deviation")


class GridMismatch(ValidationError):
    pass


class InsufficientBasisCount(ValidationError):
    pass


class DomainViolation(ValidationError):
    pass


class NumericalInput(ValidationError):
    pass


class ParseError(ValidationError):
    """Malformed CSV input; carries the file, row and column that failed."""

    def __init__(self, path, row, column, message):
        self.path = str(path)
        self.row = row
        self.column = column
        where = f"row {row}" if column is None else f"row {row}, column {column!r}"
        super().__init__(f"{path}: {where}: {message}")


class DegenerateConditional(FOSRError, ArithmeticError):
    pass


class IllConditionedPrecision(FOSRError, ArithmeticError):
    def __init__(self, min_pivot, message=None):
        self.min_pivot = min_pivot
        super().__init__(message or f"Cholesky of precision failed; smallest diagonal pivot {min_pivot:.3e}")


class StuckChains(FOSRError, ArithmeticError):
    pass


class DegreesOfFreedom(FOSRError, ArithmeticError):
    pass


class NullVariation(FOSRError, ArithmeticError):
    pass


class SaturatedFit(FOSRError, ArithmeticError):
    pass


class ChainFailure(FOSRError, RuntimeError):
    """One or more chains raised; ``failures`` maps chain index to the error."""

    def __init__(self, failures):
        self.failures = dict(failures)
        detail = "; ".join(f"chain {c}: {e!r}" for c, e in sorted(self.failures.items()))
        super().__init__(f"{len(self.failures)} chain(s) failed: {detail}")
