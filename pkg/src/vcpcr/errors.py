"""Exception hierarchy shared by the library and the CLI.

The CLI maps ``ModelError`` subclasses to exit code 2 and ``DataError``
subclasses raised while reading files to exit code 3.
"""


class VcpcrError(Exception):
    """Base class for all package errors."""


class DataError(VcpcrError, ValueError):
    pass


class NonFinite(DataError):
    pass


class ConstantColumn(DataError):
    def __init__(self, j, name=None):
        self.column = j
        label = f"{j}" if name is None else f"{j} ({name})"
        super().__init__(f"column {label} has zero variance")


class ConstantVector(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class MissingColumn(DataError):
    pass


class ParseError(DataError):
    def __init__(self, row, col, value):
        self.row, self.col, self.value = row, col, value
        super().__init__(f"cannot parse {value!r} as a number at row {row}, column {col!r}")


class EmptyFile(DataError):
    pass


class InvalidPartition(DataError):
    pass


class EmptyCluster(InvalidPartition):
    def __init__(self, k):
        self.cluster = k
        super().__init__(f"initial cluster {k} has no members")


class TooFewSamples(DataError):
    pass


class InvalidSpec(DataError):
    pass


class ModelError(VcpcrError, ArithmeticError):
    """Numerical or model failure (CLI exit code 2)."""


class AllVariablesRemoved(ModelError):
    def __init__(self, lam=None):
        self.lam = lam
        msg = "every variable was removed from the clustering"
        if lam is not None:
            msg += f" at lambda={lam:.6g}; lambda is too large for these data/weights"
        super().__init__(msg)


class DegenerateLatent(ModelError):
    def __init__(self, k):
        self.cluster = k
        super().__init__(f"latent variable of cluster {k} is constant")


class SingularSystem(ModelError):
    pass


class MaxIterations(ModelError):
    def __init__(self, limit):
        self.limit = limit
        super().__init__(f"solver did not converge within {limit} iterations")


class NotPositiveDefinite(ModelError):
    pass
