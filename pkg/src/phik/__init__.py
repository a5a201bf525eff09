"""Gaussian-process field reconstruction with ensemble-derived (physics-informed) priors."""
from .active import (
    AcquisitionState,
    mse_over_candidates,
    mse_sum_lower_bound,
    projection_identity_check,
    run_active_learning,
    select_next,
)
from .constraints import (
    BoundReport,
    ConstraintPreconditionError,
    DiscreteLinearOperator,
    boundary_restriction_operator,
    exact_preservation_check,
    normal_derivative_operator,
    theorem_bound,
)
from .core import (
    CovarianceMatrix,
    Field,
    Grid2D,
    LocationError,
    Observations,
    PointSet,
    Prediction,
    RelativeAlpha,
    SingularCovarianceError,
    assemble_covariance,
    gp_predict,
    krige_mse,
    krige_predict,
    regularize,
    relative_frobenius_error,
)
from .kriging import (
    KrigingFitError,
    MleFit,
    StationaryKernel,
    concentrated_loglik,
    fit_kriging,
    gaussian_kernel,
    kriging_predict,
    mle_mu_sigma,
)
from .mc import Ensemble, EmpiricalMoments, mc_cov, mc_mean, observe, phik_predict
from .mlmc import (
    LevelEnsemble,
    MlmcMoments,
    interpolate_coarse_to_fine,
    mlmc_cost,
    mlmc_cov,
    mlmc_mean,
    mlmc_phik_predict,
)
from .models import (
    BraninParams,
    GaussianTwoLevelModel,
    StochasticBranin,
    StochasticBraninSample,
    branin,
    constrained_field_model,
    generate_ensemble,
    generate_levels,
    generate_two_level,
    halton_design,
    stochastic_branin,
)
from .rng import RngSpec

__version__ = "0.1.0"
