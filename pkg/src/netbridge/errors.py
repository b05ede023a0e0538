"""Exception types shared across the solver modules."""


class NetbridgeError(Exception):
    """Base class for all netbridge errors."""


class ValidationError(NetbridgeError):
    """Input data violates a structural precondition (shape, sign, mass)."""


class InfeasibleError(NetbridgeError):
    """The marginal constraints cannot be met on the prior's support."""


class NotConvergedError(NetbridgeError):
    """Iteration budget exhausted before the residual dropped below tol."""

    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"no convergence after {iterations} iterations (residual {residual:.3e})"
        )


class SolverInconsistencyError(NetbridgeError):
    """A converged solution violates an identity it should satisfy exactly."""


class SizeCapError(NetbridgeError):
    """A dense path-space tensor would exceed the configured entry cap."""
