"""Exception hierarchy shared across the package."""


class PlastromError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(PlastromError):
    """Invalid run configuration or command-line usage."""


class MeshError(PlastromError):
    """Invalid mesh input or degenerate geometry."""


class ConstitutiveError(PlastromError):
    """Return-mapping failure at a quadrature point."""

    def __init__(self, message, residual=None, point=None):
        super().__init__(message)
        self.residual = residual
        self.point = point


class ConstraintError(PlastromError):
    """Ill-posed kinematic constraint input."""


class SolverError(PlastromError):
    """Linear or nonlinear solver failure."""


class NewtonError(SolverError):
    """Newton iteration did not reach the stopping criterion."""

    def __init__(self, message, final_norm=None, history=None):
        super().__init__(message)
        self.final_norm = final_norm
        self.history = history or []


class GappyRankError(PlastromError):
    """Masked stress basis is rank deficient for the requested modes."""
