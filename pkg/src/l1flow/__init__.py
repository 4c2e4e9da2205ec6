"""Nonlinear L1-norm minimization by gradient flow of a smoothed energy.

The library minimizes objectives of the form ``sum_i |r_i(x)|`` for
smooth residuals r_i. Each |r_i| is replaced by a log-sum-exp surrogate
whose width is controlled by an extra state variable that the descent
flow itself drives to zero; integrating the flow to its equilibrium
yields a stationary point of the original nonsmooth objective, certified
by a minimum-norm subgradient residual.
"""

from .expr import (
    DualValue,
    ExpressionDomainError,
    ExpressionError,
    ExpressionSyntaxError,
    ResidualExpr,
    eval_dual,
    eval_value,
    parse,
)
from .ode import OdeSettings, Trajectory, integrate, step_pair
from .problem import Problem, StationarityReport, builtin
from .smoothing import (
    AugmentedState,
    EnergyReport,
    SmoothingParams,
    energy,
    grad_e1,
    hessian_blocks,
    logistic_coeff,
    smooth_abs,
    smooth_abs_dmu,
    smooth_sign,
)
from .solver import (
    MultiStartReport,
    SolveConfig,
    SolveResult,
    benchmark_config,
    flow_field,
    multi_start,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentedState",
    "DualValue",
    "EnergyReport",
    "ExpressionDomainError",
    "ExpressionError",
    "ExpressionSyntaxError",
    "MultiStartReport",
    "OdeSettings",
    "Problem",
    "ResidualExpr",
    "SmoothingParams",
    "SolveConfig",
    "SolveResult",
    "StationarityReport",
    "Trajectory",
    "benchmark_config",
    "builtin",
    "energy",
    "eval_dual",
    "eval_value",
    "flow_field",
    "grad_e1",
    "hessian_blocks",
    "integrate",
    "logistic_coeff",
    "multi_start",
    "parse",
    "smooth_abs",
    "smooth_abs_dmu",
    "smooth_sign",
    "solve",
    "step_pair",
    "__version__",
]
