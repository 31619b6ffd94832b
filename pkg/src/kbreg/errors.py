"""Exception hierarchy shared by all kbreg modules."""


class KbrError(Exception):
    """Base class for all kbreg errors."""


class KinkError(KbrError):
    """A one-sided-differentiable loss was differentiated exactly at a kink."""


class NotTwiceDifferentiable(KbrError):
    """An operation requiring a C2 loss was called with a C0/C1 loss."""


class DimensionMismatch(KbrError):
    """Point dimensions do not agree."""


class KernelMismatch(KbrError):
    """Two RKHS expansions built from different kernels were combined."""


class UnboundedKernel(KbrError):
    """A bound evaluator was called with a kernel of unknown sup-norm."""


class InvalidLambda(KbrError):
    """The regularization parameter must be strictly positive."""


class NonConvergence(KbrError):
    """The solver exhausted its budget with a stationarity residual above tol."""

    def __init__(self, message, residual=None, best=None):
        super().__init__(message)
        self.residual = residual
        self.best = best


class SingularSystem(KbrError):
    """A linear solve failed even after diagonal jitter retries."""


class UnknownScenario(KbrError):
    """Scenario name not in the catalogue."""


class UnsupportedNoiseModel(KbrError):
    """Risk oracle only supports additive Gaussian noise on the identity."""


class InvalidSchedule(KbrError):
    """A regularization schedule violates the consistency conditions."""


class UsageError(KbrError):
    """Invalid command-line or config input; maps to exit code 2."""
