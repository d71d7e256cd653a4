class BrachistoError(Exception):
    """Base class for every error raised by the solver package."""


class DimensionMismatchError(BrachistoError, ValueError):
    pass


class NonFiniteMatrixError(BrachistoError, ValueError):
    pass


class NotHermitianError(BrachistoError, ValueError):
    pass


class NotUnitaryError(BrachistoError, ValueError):
    pass


class BranchCutError(BrachistoError, ArithmeticError):
    """Eigenphases cluster on both sides of the principal-branch cut at ±π."""


class EigensolverError(BrachistoError, ArithmeticError):
    pass


class InvalidDensityMatrixError(BrachistoError, ValueError):
    pass


class SpectraMismatchError(BrachistoError, ValueError):
    pass


class PhaseArityError(BrachistoError, ValueError):
    pass


class DegenerateSpectrumError(BrachistoError, ValueError):
    pass


class ZeroHamiltonianError(BrachistoError, ValueError):
    pass


class NotPureStateError(BrachistoError, ValueError):
    pass
