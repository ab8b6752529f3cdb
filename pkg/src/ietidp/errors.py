"""Exception hierarchy used across the package."""


class IetiError(Exception):
    """Base class for all package errors."""


class SplineDomainError(IetiError, ValueError):
    """Evaluation point outside the parameter interval or square."""


class KnotVectorError(IetiError, ValueError):
    """Knot sequence violates the open knot vector rules."""


class RefinementError(IetiError, ValueError):
    """Knot insertion would exceed the admissible multiplicity."""


class SingularGeometryError(IetiError):
    """Geometry map with non-positive Jacobian determinant."""


class AssemblyError(IetiError):
    """Galerkin assembly failed (e.g. singular Jacobian at a quadrature point)."""


class NonConformingInterfaceError(IetiError, ValueError):
    """Patch sides declared as an interface do not match."""


class NotSPDError(IetiError):
    """Matrix handed to a Cholesky-type factorization is not SPD."""


class SingularSaddleError(IetiError):
    """Saddle point system [[K, C^T], [C, 0]] is singular."""


class IndefiniteError(IetiError):
    """Non-positive curvature encountered in conjugate gradients."""


class ConfigurationError(IetiError, ValueError):
    """Invalid solver or run configuration."""


class SolverError(IetiError):
    """The iterative solver did not converge.

    The residual history of the failed run is kept on ``residuals``.
    """

    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)
