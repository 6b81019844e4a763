"""Neural tangent kernels of two-layer PINNs: initial-kernel convergence and training drift."""

from ._version import __version__
from .errors import (
    IncompleteJet,
    InvalidArgument,
    IterationLimit,
    TrainingDiverged,
    UnsupportedConfiguration,
    UnsupportedOrder,
)
from .netcore import (
    MultiIndex,
    NetworkParams,
    derivatives,
    derive_seed,
    forward,
    grad_of_derivative,
    jet,
    make_params,
    partial_derivative,
)
from .opspec import (
    Composite,
    HomogeneityReport,
    Monomial,
    OperatorSpec,
    eval_operator,
    homogeneity,
    kdv_operator,
    linearize,
    residual_gradient,
    sine_gordon_operator,
)
from .kernel import (
    KernelMatrix,
    ProblemSpec,
    SampleSet,
    assemble_ntk,
    compute_kernel,
    limiting_kernel_bb,
    spectral_norm,
    width_sweep,
)
from .training import TrainingConfig, drift_study, gd_train, kernel_ode_predict, loss_and_grad
from .problems import builtin_problem
from .harness import ExperimentConfig, run

__all__ = [name for name in dir() if not name.startswith("_")]
