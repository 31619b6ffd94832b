"""kbreg: kernel-based regression with convex losses and robustness diagnostics."""

from .errors import (
    DimensionMismatch,
    InvalidLambda,
    InvalidSchedule,
    KbrError,
    KernelMismatch,
    KinkError,
    NonConvergence,
    NotTwiceDifferentiable,
    SingularSystem,
    UnboundedKernel,
    UnknownScenario,
    UnsupportedNoiseModel,
    UsageError,
)
from .kernels import (
    Kernel,
    RkhsFunction,
    combine,
    distance_h,
    linear,
    parse_kernel,
    polynomial,
    rbf,
    scale,
    zero_function,
)
from .losses import (
    Loss,
    eps_insensitive,
    huber,
    least_squares,
    logistic,
    parse_loss,
    pinball,
)
from .solver import (
    Dataset,
    FitOptions,
    FitResult,
    closed_form_ls,
    fit,
    objective,
    stationarity_certificate,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DimensionMismatch",
    "FitOptions",
    "FitResult",
    "InvalidLambda",
    "InvalidSchedule",
    "KbrError",
    "Kernel",
    "KernelMismatch",
    "KinkError",
    "Loss",
    "NonConvergence",
    "NotTwiceDifferentiable",
    "RkhsFunction",
    "SingularSystem",
    "UnboundedKernel",
    "UnknownScenario",
    "UnsupportedNoiseModel",
    "UsageError",
    "closed_form_ls",
    "combine",
    "distance_h",
    "eps_insensitive",
    "fit",
    "huber",
    "least_squares",
    "linear",
    "logistic",
    "objective",
    "parse_kernel",
    "parse_loss",
    "pinball",
    "polynomial",
    "rbf",
    "scale",
    "stationarity_certificate",
    "zero_function",
]
