"""Optimal life-insurance / consumption / investment planning under exponential utility.

Two independent solution routes — a martingale/duality closed form and a
dynamic-programming value surface — cross-validated against each other and
against seeded Monte Carlo simulation of the wealth jump-diffusion.
"""

from .closedform import (
    ClosedFormSolution,
    DualObjectiveInputs,
    budget_identity_check,
    dual_objective,
    g1,
    g2,
    optimal_consumption,
    optimal_portfolio,
    solve,
    wealth_identity,
    zeta_of_theta,
)
from .hjb import (
    A_of_t,
    B_of_t,
    FeedbackControls,
    ValueSurface,
    feedback_controls,
    indifference_price,
    solve_surface,
    value,
)
from .montecarlo import (
    CheckReport,
    EstimatorResult,
    MonteCarloEngine,
    PathBundle,
    SimConfig,
    budget_check,
    estimate_utility,
    martingale_check,
    simulate_paths,
)
from .params import (
    DerivedConstants,
    InvalidParams,
    ModelParams,
    PiecewiseConstant,
    TimeGrid,
    derive,
    validate,
)
from .stateprice import (
    DensityFactors,
    MortalityDraw,
    compensated_mortality,
    phi_N,
    phi_Z,
    sample_tau,
    survival_probability,
)

__version__ = "0.1.0"

__all__ = [
    "A_of_t",
    "B_of_t",
    "CheckReport",
    "ClosedFormSolution",
    "DensityFactors",
    "DerivedConstants",
    "DualObjectiveInputs",
    "EstimatorResult",
    "FeedbackControls",
    "InvalidParams",
    "ModelParams",
    "MonteCarloEngine",
    "MortalityDraw",
    "PathBundle",
    "PiecewiseConstant",
    "SimConfig",
    "TimeGrid",
    "ValueSurface",
    "budget_check",
    "budget_identity_check",
    "compensated_mortality",
    "derive",
    "dual_objective",
    "estimate_utility",
    "feedback_controls",
    "g1",
    "g2",
    "indifference_price",
    "martingale_check",
    "optimal_consumption",
    "optimal_portfolio",
    "phi_N",
    "phi_Z",
    "sample_tau",
    "simulate_paths",
    "solve",
    "solve_surface",
    "survival_probability",
    "validate",
    "value",
    "wealth_identity",
    "zeta_of_theta",
]
