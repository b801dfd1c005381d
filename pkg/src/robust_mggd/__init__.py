"""Robust joint estimation of mean, precision matrix and multiplicative
perturbations for generalized Gaussian samples, with baseline estimators and
a Monte Carlo benchmark harness."""

from .baselines import TylerConfig, empirical, tyler_joint, tyler_shrinkage
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateSampleError,
    DivergenceError,
    InvalidInputError,
    ReportIOError,
    RobustMggdError,
    SingularMatrixError,
)
from .harness import (
    EstimatorSpec,
    ExperimentConfig,
    MetricReport,
    PrecisionKind,
    emit_report,
    gen_precision_ar3,
    gen_precision_dense,
    gen_precision_uniform_sparse,
    load_config,
    run_monte_carlo,
    tune_lambda,
)
from .matrix_core import (
    SpectralDecomp,
    eig_sym,
    matrix_power,
    spectral_norm,
    symmetrize,
)
from .model import (
    MggdParams,
    PerturbationSpec,
    SampleSet,
    mggd_covariance_factor,
    neg_log_likelihood,
    perturb,
    read_sample_csv,
    sample_mggd,
    scatter_to_covariance,
    tau_hat_concentrated,
)
from .objective import (
    FbarParams,
    MReg,
    PrimalPoint,
    QReg,
    RegularizerSpec,
    ThetaReg,
    cost_f,
    eta_default,
    fbar,
    fbar_curve,
    perspective_phi,
    reparam_backward,
    reparam_forward,
    theta_hat,
    theta_hat_curve,
)
from .prox import (
    PerspectiveProxParams,
    prox_elastic_net_sym,
    prox_gm,
    prox_l1_sym,
    prox_log_barrier,
    prox_logdet,
    prox_perspective,
    prox_perspective_weighted,
    prox_power_penalty,
)
from .solver import (
    DualPoint,
    EstimateResult,
    SolveDiagnostics,
    SolverConfig,
    apply_T,
    apply_T_adjoint,
    benchmark_config,
    build_Y_matrix,
    default_config,
    estimate,
    solve,
)

__version__ = "0.1.0"
