"""Closed-form solution of the household problem by the martingale/duality route.

For exponential utility ``u(x) = -exp(-alpha x)/alpha`` the dual objective
over a candidate multiplier zeta and a candidate risk-neutral mortality
intensity psi_v reduces to deterministic integrals:

    J(zeta, v) = -(zeta/alpha) * [ integral_0^T e^{-r s} (h(0,s) - f(0,s)) ds
                                   + e^{-r T} h(0,T) - alpha W0 ]

    h(0,s) = 1 - ln(zeta) - gamma s
             - integral_0^s (ln(psi_v/lambda) + (lambda - psi_v)/psi_v)
                            * psi_v * e^{-integral_0^u psi_v} du
    f(0,s) = alpha * (y(s) - (r - psi_v(s) * delta) * theta)

The entropy-like penalty inside h is nonnegative, equals 0 pointwise when
psi_v = lambda, and is taken to be 0 at psi_v = 0 (its infimum over
admissible intensities); the income term f is increasing in psi_v.  The
minimum over psi_v is therefore attained at the boundary psi_v = 0 for every
premium theta >= 0, where the optimal multiplier has the closed form

    zeta(theta) = exp( -( gamma g2(0)
                          + alpha * integral_0^T e^{-r s} (y(s) - r theta) ds
                          + alpha W0 ) / g1(0) )

with the annuity-style factors

    g1(t) = (1 - e^{-r(T-t)})/r + e^{-r(T-t)}
    g2(t) = (r-1)/r (T-t) e^{-r(T-t)} + (1 - e^{-r(T-t)})/r**2.

Since d ln zeta / d theta = alpha r g1(0)^{-1} * integral_0^T e^{-rs} ds > 0
for r > 0 and the optimal value is J(zeta(theta)) = -(zeta(theta)/alpha) g1(0),
the objective is strictly decreasing in theta: the optimal premium is
theta_hat = 0 and buying no insurance is optimal at these prices.

The optimal policy in feedback/pathwise form:

    c_hat(t) = -( ln(zeta* phi_v*(t)) + rho t ) / alpha
    W_hat(t) = c_hat(t) g1(t) - (gamma/alpha) g2(t)
               - integral_t^T e^{-r(s-t)} y(s) ds
    w_hat(t) = (mu - r) / (sigma**2 alpha) * g1(t)

where, under the optimal pricing measure, mortality is suppressed and
phi_v*(t) = beta(t) phi_Z(t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .params import DerivedConstants, ModelParams, PiecewiseConstant, derive
from .quadrature import simpson_uniform

__all__ = [
    "ClosedFormSolution",
    "DualObjectiveInputs",
    "g1",
    "g2",
    "annuity_factor",
    "discounted_income",
    "zeta_of_theta",
    "dual_objective",
    "solve",
    "optimal_consumption",
    "wealth_identity",
    "optimal_portfolio",
    "budget_identity_check",
]

DEFAULT_QUAD_INTERVALS = 10_000


def g1(t: float, params: ModelParams) -> float:
    """Annuity-plus-terminal factor; g1(T) = 1, g1' = r g1 - 1."""
    m = params.T - t
    if params.r == 0.0:
        return m + 1.0
    e = math.exp(-params.r * m)
    return (1.0 - e) / params.r + e


def g2(t: float, params: ModelParams) -> float:
    """Time-weighted companion of g1; g2(T) = 0, g2' = r g2 - g1."""
    m = params.T - t
    if params.r == 0.0:
        return 0.5 * m * m + m
    e = math.exp(-params.r * m)
    return (params.r - 1.0) / params.r * m * e + (1.0 - e) / params.r**2


def annuity_factor(t: float, r: float) -> float:
    """integral_0^t e^{-r s} ds."""
    if r == 0.0:
        return t
    return (1.0 - math.exp(-r * t)) / r


def discounted_income(t: float, params: ModelParams) -> float:
    """integral_t^T e^{-r(s-t)} y(s) ds, exact per income segment."""
    return params.y_fn.discounted_integral(t, params.T, params.r)


def zeta_of_theta(theta: float, params: ModelParams) -> float:
    """Optimal dual multiplier for a fixed premium amount theta >= 0."""
    if theta < 0.0:
        raise ValueError("theta must be nonnegative")
    der = derive(params)
    income = discounted_income(0.0, params) - params.r * theta * annuity_factor(
        params.T, params.r
    )
    exponent = -(
        der.gamma * g2(0.0, params) + params.alpha * income + params.alpha * params.W0
    ) / g1(0.0, params)
    return math.exp(exponent)


@dataclass(frozen=True)
class DualObjectiveInputs:
    """Candidate point of the dual problem: intensity psi_v, premium, multiplier."""

    psi_v_fn: PiecewiseConstant
    theta: float
    zeta: float


def _penalty_at(
    s_points: np.ndarray,
    psi_fn: PiecewiseConstant,
    lambda_fn: PiecewiseConstant,
    T: float,
) -> np.ndarray:
    """Entropy-like penalty integral of h at each s, exact per segment.

    Integrand (psi ln(psi/lambda) + lambda - psi) e^{-integral psi}; segments
    with psi = 0 contribute 0 (the boundary convention), and psi > 0 where
    lambda = 0 is rejected as an undefined density ratio.
    """
    edges = sorted({0.0, T, *(b for b in psi_fn.breaks if 0.0 < b < T),
                    *(b for b in lambda_fn.breaks if 0.0 < b < T)})
    out = np.zeros_like(np.asarray(s_points, dtype=float))
    cum_pen = 0.0
    cum_haz = 0.0  # integral of psi up to the segment start
    s = np.asarray(s_points, dtype=float)
    for a, b in zip(edges[:-1], edges[1:]):
        p = psi_fn(a)
        lam = lambda_fn(a)
        if p > 0.0 and lam <= 0.0:
            raise ValueError("dual objective undefined: psi_v > 0 where lambda = 0")
        inside = (s > a) & (s <= b)
        if p > 0.0:
            coeff = p * math.log(p / lam) + lam - p
            seg_full = coeff * math.exp(-cum_haz) * (-math.expm1(-p * (b - a))) / p
            if inside.any():
                out[inside] = cum_pen + coeff * math.exp(-cum_haz) * (
                    -np.expm1(-p * (s[inside] - a))
                ) / p
            cum_pen += seg_full
            cum_haz += p * (b - a)
        else:
            if inside.any():
                out[inside] = cum_pen
    out[s <= 0.0] = 0.0
    return out


def dual_objective(
    inputs: DualObjectiveInputs,
    params: ModelParams,
    n_intervals: int = DEFAULT_QUAD_INTERVALS,
) -> float:
    """Dual objective J(zeta, v) by deterministic quadrature.

    The outer integral runs composite Simpson on segments aligned to the
    breakpoints of psi_v, lambda and y, so the only quadrature error comes
    from the smooth exponential factors.
    """
    if inputs.zeta <= 0.0:
        raise ValueError("zeta must be positive")
    if inputs.theta < 0.0:
        raise ValueError("theta must be nonnegative")
    if inputs.psi_v_fn.min_value() < 0.0:
        raise ValueError("psi_v_fn must be nonnegative")
    der = derive(params)
    T, r, alpha = params.T, params.r, params.alpha
    psi, lam, y = inputs.psi_v_fn, params.lambda_fn, params.y_fn

    edges = sorted({0.0, T, *(b for b in psi.breaks if 0.0 < b < T),
                    *(b for b in lam.breaks if 0.0 < b < T),
                    *(b for b in y.breaks if 0.0 < b < T)})
    total = 0.0
    log_zeta = math.log(inputs.zeta)
    for a, b in zip(edges[:-1], edges[1:]):
        n = max(2, int(round(n_intervals * (b - a) / T / 2)) * 2)
        s = np.linspace(a, b, n + 1)
        pen = _penalty_at(s, psi, lam, T)
        h = 1.0 - log_zeta - der.gamma * s - pen
        f = alpha * (y(s) - (r - psi(s) * params.delta) * inputs.theta)
        total += simpson_uniform(np.exp(-r * s) * (h - f), (b - a) / n)
    h_T = (
        1.0
        - log_zeta
        - der.gamma * T
        - float(_penalty_at(np.array([T]), psi, lam, T)[0])
    )
    bracket = total + math.exp(-r * T) * h_T - alpha * params.W0
    return -(inputs.zeta / alpha) * bracket


@dataclass(frozen=True)
class ClosedFormSolution:
    """Optimal multiplier, premium, value and the g-factor evaluators."""

    zeta_star: float
    theta_hat: float
    g1_at: Callable[[float], float]
    g2_at: Callable[[float], float]
    value: float


def solve(
    params: ModelParams, theta_max: float = 2.0, n_theta_check: int = 9
) -> ClosedFormSolution:
    """Solve the dual problem: theta_hat = 0, zeta* = zeta(0).

    Before returning, numerically confirms that J(zeta(theta)) decreases on
    (0, theta_max] (strictly for r > 0), i.e. that the boundary optimum is
    not an artifact of the closed form.
    """
    g1_0 = g1(0.0, params)
    thetas = np.linspace(0.0, theta_max, n_theta_check)
    j_vals = np.array(
        [-(zeta_of_theta(t, params) / params.alpha) * g1_0 for t in thetas]
    )
    diffs = np.diff(j_vals)
    if params.r > 0.0:
        if not np.all(diffs < 0.0):
            raise ArithmeticError("objective is not decreasing in theta")
    elif not np.all(np.abs(diffs) <= 1e-12 * np.abs(j_vals[:-1])):
        raise ArithmeticError("objective should be flat in theta when r = 0")
    zeta_star = zeta_of_theta(0.0, params)
    return ClosedFormSolution(
        zeta_star=zeta_star,
        theta_hat=0.0,
        g1_at=lambda t: g1(t, params),
        g2_at=lambda t: g2(t, params),
        value=-(zeta_star / params.alpha) * g1_0,
    )


def optimal_consumption(
    t: float, phi_vstar_t: float, zeta_star: float, params: ModelParams
) -> float:
    """c_hat(t) = -( ln(zeta* phi_v*(t)) + rho t ) / alpha.

    Only defined pre-death: under the optimal pricing intensity the density
    factor vanishes on {tau <= t}, so a zero factor is rejected.
    """
    if phi_vstar_t <= 0.0:
        raise ValueError(
            "optimal consumption is defined only pre-death (phi_v* must be positive)"
        )
    return -(math.log(zeta_star * phi_vstar_t) + params.rho * t) / params.alpha


def wealth_identity(t: float, c_hat_t: float, params: ModelParams) -> float:
    """Optimal wealth from optimal consumption at the same instant."""
    der = derive(params)
    return (
        c_hat_t * g1(t, params)
        - der.gamma / params.alpha * g2(t, params)
        - discounted_income(t, params)
    )


def optimal_portfolio(t: float, params: ModelParams) -> float:
    """Risky holding w_hat(t) = (mu - r)/(sigma**2 alpha) * g1(t); deterministic."""
    return (params.mu - params.r) / (params.sigma**2 * params.alpha) * g1(t, params)


def budget_identity_check(
    solution: ClosedFormSolution, params: ModelParams, mc_engine
) -> "CheckReport":
    """Monte Carlo check of the budget identity at the optimum.

    Under the pricing measure (Brownian drift shifted by -xi, mortality
    suppressed) the discounted optimal consumption stream plus terminal
    wealth must price back to initial wealth plus discounted income:

        E[ integral_0^T beta c_hat dt + beta(T) W_hat(T) ]
            = W0 + integral_0^T e^{-r t} y(t) dt.

    The engine must be configured for the pricing measure; with theta* = 0
    the premium adjustment term vanishes identically.
    """
    from .montecarlo import CheckReport  # runtime import avoids a module cycle

    lhs = mc_engine.estimate_budget_lhs(params, solution.zeta_star)
    rhs = params.W0 + discounted_income(0.0, params)
    discrepancy = lhs.mean - rhs
    threshold = 3.0 * lhs.std_error if lhs.std_error > 0.0 else 1e-8
    return CheckReport(
        name="budget-identity",
        value=discrepancy,
        std_error=lhs.std_error,
        threshold=threshold,
        passed=abs(discrepancy) <= threshold,
        n_paths=lhs.n_paths,
        seed=lhs.seed,
    )
