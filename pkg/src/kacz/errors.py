"""Exception hierarchy shared by every kacz module."""


class KaczError(Exception):
    """Base class for all errors raised by kacz."""


class DimensionMismatch(KaczError, ValueError):
    pass


class ZeroRow(KaczError, ValueError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"row {index} has zero norm")


class PairwiseDependentRows(KaczError, ValueError):
    def __init__(self, i, j, cosine):
        self.i, self.j, self.cosine = i, j, cosine
        super().__init__(f"rows {i} and {j} are linearly dependent (|cos| = {cosine!r})")


class SizeCapExceeded(KaczError, ValueError):
    pass


class InconsistentSystem(KaczError, ValueError):
    pass


class ConvergedResidual(KaczError):
    """The residual is (numerically) zero, so no step can be taken."""


class EmptyIndexSet(KaczError, RuntimeError):
    """The greedy index set came out empty. This indicates a numerical bug."""


class NearParallelRows(KaczError, ArithmeticError):
    def __init__(self, i, j):
        self.i, self.j = i, j
        super().__init__(f"rows {i} and {j} are numerically parallel")


class DegenerateBound(KaczError, ArithmeticError):
    """A convergence factor would be <= 0, i.e. the bound is vacuous."""


class ConfigurationError(KaczError, ValueError):
    pass


class MaxItersExceeded(KaczError):
    def __init__(self, trace):
        self.trace = trace
        super().__init__(f"no convergence after {len(trace)} iterations")


class ParseError(KaczError, ValueError):
    def __init__(self, line, reason):
        self.line, self.reason = line, reason
        super().__init__(f"line {line}: {reason}")


class UnsupportedField(KaczError, ValueError):
    pass
