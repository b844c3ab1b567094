"""Model configuration and derived market constants.

The household faces a frictionless market with a riskless account (rate r),
one risky asset (drift mu, volatility sigma), a mortality hazard lambda(t),
a wage income stream y(t) that both run on [0, T], and a life-insurance
contract paying ``theta * delta`` on death against a continuous premium
``theta * r``.  Preferences are exponential with absolute risk aversion
alpha and time-discount rate rho.

Every solver in the package shares three derived constants:

    xi    = (mu - r) / sigma        market price of risk
    psi   = r / delta               risk-neutral mortality intensity
    gamma = rho - r + xi**2 / 2     composite discount rate

Units: all rates are per year, times in years, wealth in currency units
(income and consumption are currency per year).  lambda(t) and y(t) are
piecewise-constant on user-supplied breakpoints, so every time integral of
them used in the package is exact per segment.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

__all__ = [
    "InvalidParams",
    "PiecewiseConstant",
    "ModelParams",
    "DerivedConstants",
    "TimeGrid",
    "validate",
    "derive",
]


class InvalidParams(ValueError):
    """A model parameter violates its constraint; the message names the field."""


@dataclass(frozen=True)
class PiecewiseConstant:
    """Right-continuous piecewise-constant function of time.

    ``values[i]`` applies on ``[breaks[i], breaks[i+1])``; the last value
    extends to +infinity.  ``breaks`` must start at 0 and increase strictly.
    """

    breaks: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        breaks = tuple(float(b) for b in self.breaks)
        values = tuple(float(v) for v in self.values)
        if len(breaks) != len(values) or not breaks:
            raise InvalidParams("piecewise function needs one value per breakpoint")
        if breaks[0] != 0.0:
            raise InvalidParams("piecewise breakpoints must start at 0")
        if any(b1 <= b0 for b0, b1 in zip(breaks, breaks[1:])):
            raise InvalidParams("piecewise breakpoints must be strictly increasing")
        if any(not math.isfinite(v) for v in values) or any(
            not math.isfinite(b) for b in breaks
        ):
            raise InvalidParams("piecewise breakpoints and values must be finite")
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "values", values)
        # cumulative integral at each breakpoint, for exact integrals
        cum = [0.0]
        for b0, b1, v in zip(breaks, breaks[1:], values):
            cum.append(cum[-1] + v * (b1 - b0))
        object.__setattr__(self, "_cum", tuple(cum))

    @classmethod
    def constant(cls, value: float) -> "PiecewiseConstant":
        return cls((0.0,), (float(value),))

    @property
    def is_constant(self) -> bool:
        return len(self.values) == 1 or len(set(self.values)) == 1

    def __call__(self, t):
        """Value at time t (t >= 0); vectorizes over numpy arrays."""
        if isinstance(t, np.ndarray):
            idx = np.searchsorted(self.breaks, t, side="right") - 1
            return np.asarray(self.values)[np.clip(idx, 0, len(self.values) - 1)]
        i = bisect_right(self.breaks, t) - 1
        return self.values[max(i, 0)]

    def integral(self, t):
        """Exact integral over [0, t]; vectorizes over numpy arrays."""
        if isinstance(t, np.ndarray):
            tt = np.maximum(t, 0.0)
            idx = np.clip(
                np.searchsorted(self.breaks, tt, side="right") - 1,
                0,
                len(self.values) - 1,
            )
            cum = np.asarray(self._cum)[idx]
            return cum + np.asarray(self.values)[idx] * (
                tt - np.asarray(self.breaks)[idx]
            )
        if t <= 0.0:
            return 0.0
        i = bisect_right(self.breaks, t) - 1
        return self._cum[i] + self.values[i] * (t - self.breaks[i])

    def integral_between(self, t0: float, t1: float) -> float:
        return self.integral(t1) - self.integral(t0)

    def inverse_integral(self, target: float, horizon: float) -> float:
        """Smallest t with integral(t) >= target, or inf if not reached by horizon."""
        if target <= 0.0:
            return 0.0
        if self.integral(horizon) < target:
            return math.inf
        for i, (b, v) in enumerate(zip(self.breaks, self.values)):
            seg_end_cum = self._cum[i + 1] if i + 1 < len(self._cum) else math.inf
            if seg_end_cum >= target or i == len(self.values) - 1:
                if v <= 0.0:
                    continue  # flat segment cannot cross the target
                t = b + (target - self._cum[i]) / v
                seg_end = self.breaks[i + 1] if i + 1 < len(self.breaks) else math.inf
                if t <= seg_end:
                    return t
        return math.inf

    def discounted_integral(self, t0: float, t1: float, rate: float) -> float:
        """Exact ``integral of exp(-rate*(s-t0)) * f(s) ds`` over [t0, t1]."""
        if t1 <= t0:
            return 0.0
        total = 0.0
        edges = [t0] + [b for b in self.breaks if t0 < b < t1] + [t1]
        for a, b in zip(edges, edges[1:]):
            v = self(a)
            if rate == 0.0:
                total += v * (b - a)
            else:
                total += v * (math.exp(-rate * (a - t0)) - math.exp(-rate * (b - t0))) / rate
        return total

    def min_value(self) -> float:
        return min(self.values)


def _as_piecewise(x) -> PiecewiseConstant:
    if isinstance(x, PiecewiseConstant):
        return x
    return PiecewiseConstant.constant(float(x))


@dataclass(frozen=True)
class ModelParams:
    """All market, mortality, insurance and preference constants.

    ``lambda_fn`` and ``y_fn`` accept a plain number (held constant) or a
    :class:`PiecewiseConstant`.
    """

    r: float
    mu: float
    sigma: float
    rho: float
    alpha: float
    delta: float
    T: float
    W0: float
    lambda_fn: PiecewiseConstant
    y_fn: PiecewiseConstant

    def __post_init__(self):
        object.__setattr__(self, "lambda_fn", _as_piecewise(self.lambda_fn))
        object.__setattr__(self, "y_fn", _as_piecewise(self.y_fn))


@dataclass(frozen=True)
class DerivedConstants:
    xi: float
    psi: float
    gamma: float


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [t0, t1] with n_steps intervals."""

    t0: float
    t1: float
    n_steps: int

    def __post_init__(self):
        if not self.t0 < self.t1:
            raise InvalidParams("TimeGrid requires t0 < t1")
        if self.n_steps < 1:
            raise InvalidParams("TimeGrid requires n_steps >= 1")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.n_steps

    def nodes(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.n_steps + 1)


def validate(raw: ModelParams) -> ModelParams:
    """Check every ModelParams invariant; raise InvalidParams naming the field."""
    for name in ("r", "mu", "sigma", "rho", "alpha", "delta", "T", "W0"):
        v = getattr(raw, name)
        if not math.isfinite(v):
            raise InvalidParams(f"{name} must be finite")
    if raw.sigma <= 0.0:
        raise InvalidParams("sigma must be positive")
    if raw.alpha <= 0.0:
        raise InvalidParams("alpha must be positive")
    if raw.delta <= 0.0:
        raise InvalidParams("delta must be positive")
    if raw.T <= 0.0:
        raise InvalidParams("T must be positive")
    if raw.lambda_fn.min_value() < 0.0:
        raise InvalidParams("lambda_fn must be nonnegative on [0, T]")
    if raw.y_fn.min_value() < 0.0:
        raise InvalidParams("y_fn must be nonnegative on [0, T]")
    return raw


def derive(params: ModelParams) -> DerivedConstants:
    """Derived constants; pure, exact arithmetic on the validated inputs."""
    xi = (params.mu - params.r) / params.sigma
    psi = params.r / params.delta
    gamma = params.rho - params.r + 0.5 * xi * xi
    return DerivedConstants(xi=xi, psi=psi, gamma=gamma)
