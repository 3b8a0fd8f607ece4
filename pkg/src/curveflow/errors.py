"""Exception types shared across the solver."""


class RegularityError(RuntimeError):
    """A curve has vanishing parametric speed somewhere on the quadrature grid,
    or a weighted mass matrix built from it is not positive definite."""


class LinearDependenceError(RuntimeError):
    """The Gram matrix of constraint gradients is numerically singular, so the
    multipliers (and the dissipation target) are not determined."""


class NonConvergenceError(RuntimeError):
    """Newton iteration exhausted its budget or produced non-finite residuals."""

    def __init__(self, message: str, iterations: int = 0, residual_norm: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual_norm = residual_norm


class SingularJacobianError(RuntimeError):
    """The finite-difference Jacobian could not be factorized."""


class StructureViolationError(RuntimeError):
    """A converged step failed the exact dissipation/conservation identities far
    beyond round-off.  This signals an assembly bug, not a numerical limit."""


class ConfigError(ValueError):
    """A run configuration file is malformed or violates an invariant."""
