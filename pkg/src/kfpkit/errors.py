class KFPError(Exception):
    """Base class for library errors."""


class DimensionError(KFPError, ValueError):
    pass


class EllipticityError(KFPError, ValueError):
    pass


class QuadratureError(KFPError, RuntimeError):
    """Adaptive quadrature or tensor quadrature did not reach its tolerance."""


class PreconditionError(KFPError, ValueError):
    pass


class CFLError(KFPError, ValueError):
    pass


class NumericalFailure(KFPError, RuntimeError):
    """NaN/Inf or similar breakdown during time stepping."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
