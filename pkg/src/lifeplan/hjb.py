"""Dynamic-programming solution: value surface, feedback controls, indifference price.

With exponential utility the value function of the dynamic program

    V_t - rho V + max_{c,w} [ (w sigma)^2 V_xx / 2
                              + (r x + y - c + w (mu - r) - theta r) V_x
                              + (V(t, x + theta delta) - V(t, x)) lambda
                              + u1(c) ] = 0,      V(T, x) = u2(x)

has the exponential ansatz ``V(t, x) = -exp(-A(t) x - B_theta(t))`` with

    A(t) = ( (1 - e^{-r(T-t)})/(alpha r) + e^{-r(T-t)}/alpha )^{-1}
         = alpha / g1(t),

and B_theta solving the scalar backward ODE implied by the same equation,

    B' = (A/alpha) B + Q_theta,        B(T) = ln(alpha),
    Q_theta(t) = A(t) ((1 - ln A(t))/alpha - y(t) + theta r)
                 - rho - ((mu - r)/sigma)^2 / 2
                 + lambda(t) (e^{-A(t) theta delta} - 1),

whose solution in nested-integral form (P = -A/alpha) is

    B_theta(t) = e^{int_t^T P} { int_t^T -Q_theta(s) e^{int_s^T -P(u) du} ds
                                 + ln(alpha) }.

The inner integral of P is evaluated through its exact antiderivative
(``int 1/g1 = r s - ln g1``); the outer integral runs composite Simpson, as
a single cumulative pass for full surfaces.  Feedback controls follow from
the first-order conditions:

    c(t, x) = (A(t) x + B_theta(t) - ln A(t)) / alpha
    w(t)    = (mu - r) / (sigma^2 A(t))

and the buyer's indifference price h for the insurance contract, defined by
V_0(t, x) = V_theta(t, x - h), is (B_theta(t) - B_0(t)) / A(t), independent
of wealth x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .closedform import g1
from .params import ModelParams, TimeGrid, derive
from .quadrature import cumulative_simpson_uniform, simpson_uniform

__all__ = [
    "ValueSurface",
    "FeedbackControls",
    "A_of_t",
    "B_of_t",
    "solve_surface",
    "value",
    "feedback_controls",
    "indifference_price",
    "DEFAULT_GRID_STEPS",
]

DEFAULT_GRID_STEPS = 10_000


def A_of_t(t: float, params: ModelParams) -> float:
    """Risk-tolerance decay A(t); boundary A(T) = alpha exactly."""
    if t == params.T:
        return params.alpha
    if params.r == 0.0:
        return params.alpha / (params.T - t + 1.0)
    m = params.T - t
    e = math.exp(-params.r * m)
    return 1.0 / ((1.0 - e) / (params.alpha * params.r) + e / params.alpha)


def _q_theta(t, theta: float, params: ModelParams, xi: float):
    """Inhomogeneous term of the B ODE; vectorizes over t."""
    t = np.asarray(t, dtype=float)
    m = params.T - t
    if params.r == 0.0:
        g1_vals = m + 1.0
    else:
        e = np.exp(-params.r * m)
        g1_vals = (1.0 - e) / params.r + e
    a = params.alpha / g1_vals
    return (
        a * ((1.0 - np.log(a)) / params.alpha - params.y_fn(t) + theta * params.r)
        - params.rho
        - 0.5 * xi * xi
        + params.lambda_fn(t) * (np.exp(-a * theta * params.delta) - 1.0)
    )


def _exp_int_P_from_zero(t, params: ModelParams):
    """E(t) = exp(int_0^t P du), via the exact antiderivative of 1/g1."""
    t = np.asarray(t, dtype=float)
    m = params.T - t
    if params.r == 0.0:
        g1_vals = m + 1.0
    else:
        e = np.exp(-params.r * m)
        g1_vals = (1.0 - e) / params.r + e
    return g1_vals * np.exp(-params.r * t) / g1(0.0, params)


def B_of_t(
    t: float,
    theta: float,
    params: ModelParams,
    n_intervals: int = DEFAULT_GRID_STEPS,
) -> float:
    """B_theta(t) by composite Simpson over [t, T]; B(T) = ln(alpha) exactly."""
    if theta < 0.0:
        raise ValueError("theta must be nonnegative")
    if t == params.T:
        return math.log(params.alpha)
    xi = derive(params).xi
    n = max(2, int(math.ceil(n_intervals * (params.T - t) / params.T / 2)) * 2)
    s = np.linspace(t, params.T, n + 1)
    e_t = float(_exp_int_P_from_zero(np.array([t]), params)[0])
    weights = _exp_int_P_from_zero(s, params) / e_t  # exp(int_t^s P)
    integral = simpson_uniform(_q_theta(s, theta, params, xi) * weights, (params.T - t) / n)
    return math.log(params.alpha) * float(weights[-1]) - integral


@dataclass(frozen=True)
class ValueSurface:
    """A(t) and B_theta(t) sampled on a shared uniform grid for one premium."""

    theta: float
    grid: TimeGrid
    A: np.ndarray
    B: np.ndarray

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes()

    def interp_A(self, t):
        return np.interp(t, self.nodes, self.A)

    def interp_B(self, t):
        return np.interp(t, self.nodes, self.B)


def solve_surface(
    params: ModelParams, theta: float, grid: TimeGrid | None = None
) -> ValueSurface:
    """Build the (A, B_theta) surface in one cumulative-Simpson pass."""
    if theta < 0.0:
        raise ValueError("theta must be nonnegative")
    if grid is None:
        grid = TimeGrid(0.0, params.T, DEFAULT_GRID_STEPS)
    if grid.t0 != 0.0 or grid.t1 != params.T:
        raise ValueError("surface grid must span [0, T]")
    if grid.n_steps % 2:
        raise ValueError("surface grid needs an even number of steps")
    xi = derive(params).xi
    nodes = grid.nodes()
    e_vals = _exp_int_P_from_zero(nodes, params)
    running = cumulative_simpson_uniform(
        _q_theta(nodes, theta, params, xi) * e_vals, grid.dt
    )
    log_alpha = math.log(params.alpha)
    b_vals = (log_alpha * e_vals[-1] - (running[-1] - running)) / e_vals
    b_vals[-1] = log_alpha
    a_vals = params.alpha / np.array([g1(t, params) for t in nodes])
    a_vals[-1] = params.alpha
    return ValueSurface(theta=theta, grid=grid, A=a_vals, B=b_vals)


def value(t: float, x, surface: ValueSurface):
    """V(t, x) = -exp(-(A(t) x + B(t))); A, B linear between grid nodes."""
    a = surface.interp_A(t)
    b = surface.interp_B(t)
    return -np.exp(-(a * np.asarray(x, dtype=float) + b))


@dataclass(frozen=True)
class FeedbackControls:
    """Consumption and portfolio rules; ``c_of(t, x)`` broadcasts over wealth.

    ``c_tables``, when set, maps an array of times to (slope, intercept)
    arrays with ``c = (slope * x + intercept) / alpha`` — the affine-in-wealth
    form the first-order condition produces — and lets the simulator
    precompute per-step coefficients.  It must agree with ``c_of`` exactly.
    """

    c_of: Callable
    w_of: Callable
    theta: float
    c_tables: Callable | None = None


def feedback_controls(surface: ValueSurface, params: ModelParams) -> FeedbackControls:
    """First-order-condition controls read off the value surface."""

    def c_of(t, x):
        a = surface.interp_A(t)
        cst = surface.interp_B(t) - np.log(a)
        return (a * x + cst) / params.alpha

    def w_of(t):
        return (params.mu - params.r) / (params.sigma**2 * surface.interp_A(t))

    def c_tables(ts):
        a = surface.interp_A(ts)
        return a, surface.interp_B(ts) - np.log(a)

    return FeedbackControls(
        c_of=c_of, w_of=w_of, theta=surface.theta, c_tables=c_tables
    )


def indifference_price(
    t: float,
    theta: float,
    params: ModelParams,
    n_intervals: int = DEFAULT_GRID_STEPS,
) -> float:
    """Wealth offset h with V_0(t, x) = V_theta(t, x - h); independent of x."""
    b_theta = B_of_t(t, theta, params, n_intervals)
    b_zero = B_of_t(t, 0.0, params, n_intervals)
    return (b_theta - b_zero) / A_of_t(t, params)
