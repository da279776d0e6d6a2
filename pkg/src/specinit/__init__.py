"""Asymptotic performance of spectral initialization for generalized linear models."""
from ._backend import NAME as BACKEND
from .asymptotics import (
    AsymptoticPrediction,
    ParametricPoint,
    Phase,
    PhaseReport,
    critical_ratios,
    delta,
    lambda_bar,
    linear_rho_limit,
    one_bit_predict,
    parametric_curve,
    phi,
    predict,
    psi,
    q_func,
    q_inverse,
    solve_lambda_star,
    zero_crossings,
    zeta,
)
from .model import (
    AssumptionReport,
    Deterministic,
    FiniteDiscrete,
    Preprocessor,
    Sampled,
    ZSModel,
    cond_expect,
    make_logistic,
    make_one_bit,
    make_pr_subset,
    make_pr_trimming,
    make_quantizer,
    model_from_config,
    sample_zy,
    validate,
)
from .quadrature import (
    BaseMoments,
    LambdaMoments,
    QuadratureRule,
    base_moments,
    default_rule,
    expect,
    gauss_hermite,
    lambda_moments,
)

__version__ = "0.1.0"
