"""Composite-Simpson quadrature on uniform grids.

Plain and cumulative variants; both are fourth order for smooth integrands.
The cumulative variant returns the running integral at every node so that
nested integrals over a shared grid cost linear time.
"""

from __future__ import annotations

import numpy as np

__all__ = ["simpson_uniform", "cumulative_simpson_uniform"]


def simpson_uniform(values: np.ndarray, dt: float) -> float:
    """Integral of samples on a uniform grid with an even number of panels."""
    values = np.asarray(values, dtype=float)
    n = values.size - 1
    if n < 2 or n % 2:
        raise ValueError("simpson_uniform needs an even, positive panel count")
    return (dt / 3.0) * (
        values[0]
        + values[-1]
        + 4.0 * values[1:-1:2].sum()
        + 2.0 * values[2:-1:2].sum()
    )


def cumulative_simpson_uniform(values: np.ndarray, dt: float) -> np.ndarray:
    """Running integral at every node of a uniform grid (even panel count).

    Even-index prefixes use composite Simpson; odd-index prefixes close the
    half panel with the standard three-point rule, keeping fourth order.
    """
    values = np.asarray(values, dtype=float)
    n = values.size - 1
    if n < 2 or n % 2:
        raise ValueError("cumulative_simpson_uniform needs an even, positive panel count")
    out = np.empty_like(values)
    out[0] = 0.0
    pair = (dt / 3.0) * (values[:-2:2] + 4.0 * values[1:-1:2] + values[2::2])
    out[2::2] = np.cumsum(pair)
    out[1::2] = out[:-1:2] + (dt / 12.0) * (
        5.0 * values[:-2:2] + 8.0 * values[1:-1:2] - values[2::2]
    )
    return out
