"""Adaptive embedded Runge-Kutta 4(5) step controller for complex state vectors.

One controller serves every flow in the package (coset chart, residual
unitaries, direct propagation, linear 6-vector flows).  The state vectors
differ per caller; only the coefficients and the step-size logic are
shared.  Output times are hit exactly by clipping the step, which keeps
runs bit-reproducible and removes any interpolation error from
cross-pipeline comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import StepSizeUnderflowError

__all__ = ["IntegratorConfig", "IntegrationResult", "AbortIntegration", "integrate_adaptive"]


class AbortIntegration(Exception):
    """Raised inside an `on_step` callback to stop integration cleanly.

    The controller catches it and returns the partial result; `reason` is
    handed back to the caller for dispatch (rebase, breakdown, ...).
    """

    def __init__(self, reason: str, payload=None):
        super().__init__(reason)
        self.reason = reason
        self.payload = payload


@dataclass
class IntegrationResult:
    """States at the consumed grid times plus the final integrator state."""

    states: list
    t_final: float
    y_final: np.ndarray
    abort: AbortIntegration | None = None

# Dormand-Prince 5(4) tableau, FSAL.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass
class IntegratorConfig:
    """Tolerances and step limits for the embedded 4(5) pair."""

    method: str = "rk45"
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = math.inf
    min_step: float = 1e-13
    max_steps: int = 2_000_000

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.min_step >= self.max_step:
            raise ValueError("min_step must be below max_step")
        if self.method != "rk45":
            raise ValueError(f"unknown integrator method {self.method!r}")


def _error_norm(err, y0, y1, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def _initial_step(f, t0, y0, f0, direction, rtol, atol):
    # Hairer/Norsett/Wanner starting-step heuristic, order 5.
    scale = atol + rtol * np.abs(y0)
    d0 = float(np.sqrt(np.mean(np.abs(y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean(np.abs(f0 / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = f(t0 + h0 * direction, y1)
    d2 = float(np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2))) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


def integrate_adaptive(f, t_span, y0, cfg: IntegratorConfig, grid, on_step=None):
    """Integrate y' = f(t, y) over t_span, emitting the state at each grid time.

    `grid` must be an increasing array within t_span (endpoints included or
    not, caller's choice); each grid time is reached exactly by clipping
    the step.  `on_step(t, y)` runs after every accepted step; raising
    AbortIntegration inside it stops the run and returns the partial
    result, any other exception propagates.  States are 1-d complex
    vectors (y0 is flattened).
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 <= t0:
        raise ValueError("integration span must have positive length")
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid[0] < t0 - 1e-14 or grid[-1] > t1 + 1e-12 * max(1.0, abs(t1))):
        raise ValueError("output grid leaves the integration span")

    y = np.asarray(y0, dtype=complex).ravel().copy()
    t = t0
    out: list[np.ndarray] = []
    gi = 0
    while gi < grid.size and grid[gi] <= t + 1e-14 * max(1.0, abs(t)):
        out.append(y.copy())
        gi += 1

    fcur = np.asarray(f(t, y), dtype=complex)
    h = min(_initial_step(f, t, y, fcur, 1.0, cfg.rtol, cfg.atol), cfg.max_step, t1 - t0)

    steps = 0
    min_h = cfg.min_step * max(abs(t0), abs(t1), 1.0)
    k = np.empty((7, y.size), dtype=complex)
    while t < t1 - 1e-14 * max(1.0, abs(t1)):
        if steps >= cfg.max_steps:
            raise StepSizeUnderflowError(f"step budget exhausted at t={t:.6g}", time=t)
        steps += 1

        next_stop = grid[gi] if gi < grid.size else t1
        if next_stop <= t + 1e-15 * max(1.0, abs(t)):
            next_stop = t1
        h_try = min(h, cfg.max_step, next_stop - t)
        if h_try < min_h:
            h_try = min(min_h, t1 - t)

        k[0] = fcur
        for i in range(1, 7):
            yi = y + h_try * (_A[i] @ k[:i])
            k[i] = f(t + _C[i] * h_try, yi)
        y_new = y + h_try * (_B5 @ k)
        err = h_try * (_E @ k)
        enorm = _error_norm(err, y, y_new, cfg.rtol, cfg.atol)

        if enorm <= 1.0:
            t = t + h_try
            y = y_new
            fcur = k[6]  # FSAL
            while gi < grid.size and grid[gi] <= t + 1e-12 * max(1.0, abs(t)):
                out.append(y.copy())
                gi += 1
            if on_step is not None:
                try:
                    on_step(t, y)
                except AbortIntegration as abort:
                    return IntegrationResult(out, t, y.copy(), abort)
            factor = 5.0 if enorm == 0.0 else min(5.0, 0.9 * enorm ** -0.2)
            h = h_try * max(factor, 0.2)
        else:
            if h_try <= min_h * (1 + 1e-12):
                raise StepSizeUnderflowError(
                    f"cannot meet tolerances at t={t:.6g} (step {h_try:.3e})", time=t
                )
            h = h_try * max(0.2, 0.9 * enorm ** -0.2)

    while gi < grid.size:
        out.append(y.copy())
        gi += 1
    return IntegrationResult(out, t, y.copy(), None)
