"""Pathwise state-price-density factors, survival law and mortality sampling.

The state price density factors as

    phi(t) = beta(t) * phi_Z(t) * phi_N(t)

with the riskless discount ``beta(t) = exp(-r t)``, the Brownian density

    phi_Z(t) = exp( -xi * Z(t) - xi**2 * t / 2 ),

and the mortality density for a candidate risk-neutral intensity psi(t)

    phi_N(t) = ( psi(tau)/lambda(tau) * 1{tau <= t} + 1{tau > t} )
               * exp( integral_0^{t ^ tau} (lambda - psi) ds ).

Each factor is a unit-mean martingale under the physical measure, which the
montecarlo module asserts by simulation.  All operations here are pure and
evaluate exactly per piecewise-constant segment of lambda and psi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import PiecewiseConstant

__all__ = [
    "MortalityDraw",
    "DensityFactors",
    "discount_factor",
    "survival_probability",
    "sample_tau",
    "phi_Z",
    "phi_N",
    "compensated_mortality",
]


@dataclass(frozen=True)
class MortalityDraw:
    """Death time in years; ``tau = inf`` encodes survival past the horizon."""

    tau: float
    survived: bool

    def __post_init__(self):
        if not self.tau > 0.0:
            raise ValueError("tau must be positive")


@dataclass(frozen=True)
class DensityFactors:
    """State-price factors at one time on one path; ``phi_t`` is their product."""

    beta_t: float
    phiZ_t: float
    phiN_t: float
    phi_t: float

    @classmethod
    def build(cls, beta_t: float, phiZ_t: float, phiN_t: float) -> "DensityFactors":
        if beta_t <= 0.0 or phiZ_t <= 0.0 or phiN_t < 0.0:
            raise ValueError("beta_t and phiZ_t must be positive, phiN_t nonnegative")
        return cls(beta_t, phiZ_t, phiN_t, beta_t * phiZ_t * phiN_t)


def discount_factor(t: float, r: float) -> float:
    """Riskless discount beta(t) = exp(-r t)."""
    return math.exp(-r * t)


def survival_probability(t: float, lambda_fn: PiecewiseConstant) -> float:
    """P(tau > t) = exp(-integral_0^t lambda), exact per segment."""
    return math.exp(-lambda_fn.integral(t))


def sample_tau(
    lambda_fn: PiecewiseConstant, uniform_draw: float, horizon: float
) -> MortalityDraw:
    """Inverse-transform mortality draw from the survival law.

    tau solves ``integral_0^tau lambda = -ln(uniform_draw)``; if the hazard
    accumulated over [0, horizon] never reaches that level, tau = inf and the
    householder survives the horizon.  Deterministic given the draw.
    """
    if not 0.0 < uniform_draw < 1.0:
        raise ValueError("uniform_draw must lie strictly in (0, 1)")
    target = -math.log(uniform_draw)
    tau = lambda_fn.inverse_integral(target, horizon)
    return MortalityDraw(tau=tau, survived=tau > horizon)


def phi_Z(dz: np.ndarray, dt: float, xi: float) -> np.ndarray:
    """Brownian density factor trajectory from increments on a uniform grid.

    Per-step exact stochastic exponential ``exp(-xi dZ - xi**2 dt / 2)``,
    multiplied up: strictly positive and multiplicative over adjacent
    intervals at any step size.  Returns length ``len(dz) + 1`` starting at 1.
    """
    dz = np.asarray(dz, dtype=float)
    steps = np.exp(-xi * dz - 0.5 * xi * xi * dt)
    out = np.empty(dz.size + 1)
    out[0] = 1.0
    np.cumprod(steps, out=out[1:])
    return out


def phi_N(
    t: float,
    tau: MortalityDraw,
    psi_fn: PiecewiseConstant,
    lambda_fn: PiecewiseConstant,
) -> float:
    """Mortality density factor at time t for a death draw.

    With psi identical to lambda the factor is exactly 1 on every path.
    Raises if the draw died before t at a time where lambda vanishes (the
    density ratio psi/lambda is undefined there).
    """
    if psi_fn.min_value() < 0.0:
        raise ValueError("psi_fn must be nonnegative")
    cut = min(t, tau.tau)
    exponent = lambda_fn.integral(cut) - psi_fn.integral(cut)
    if tau.tau <= t:
        lam_at_death = lambda_fn(tau.tau)
        if lam_at_death <= 0.0:
            raise ValueError("phi_N undefined: death at a time with lambda = 0")
        ratio = psi_fn(tau.tau) / lam_at_death
        return ratio * math.exp(exponent)
    return math.exp(exponent)


def compensated_mortality(
    t: float, tau: MortalityDraw, lambda_fn: PiecewiseConstant
) -> float:
    """Compensated death indicator ``1{tau <= t} - integral_0^{t ^ tau} lambda``."""
    indicator = 1.0 if tau.tau <= t else 0.0
    return indicator - lambda_fn.integral(min(t, tau.tau))
