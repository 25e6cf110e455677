"""Adaptive Dormand-Prince 5(4) integration.

One small explicit stepper shared by the flow, phase and shooting code.
Compared to a library solver this keeps three things under direct control:
per-accepted-step state correction hooks (covector re-projection), hard step
caps supplied by the caller (angle and zero-approach limiting), and byte
determinism of the produced grids.
"""

from __future__ import annotations

import numpy as np

from .errors import IntegrationError

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
_E = _B5 - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                     -92097 / 339200, 187 / 2100, 1 / 40])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


def dp45_step(f, t, y, h):
    """One Dormand-Prince step; returns (y5, err_norm_scaled_by_unit_tol)."""
    k = np.empty((7, y.size))
    k[0] = f(t, y)
    for i in range(1, 7):
        k[i] = f(t + _C[i] * h, y + h * (_A[i] @ k[:i]))
    y5 = y + h * (_B5 @ k)
    err = h * (_E @ k)
    return y5, err


def _initial_step(f, t0, y0, t_end, rtol, atol):
    scale = atol + rtol * np.abs(y0)
    f0 = f(t0, y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    return min(h0, abs(t_end - t0))


def integrate(f, t0, y0, t_end, *, rtol=1e-10, atol=1e-12, max_step=np.inf,
              step_cap=None, on_accept=None, first_step=None,
              max_steps=2_000_000):
    """Integrate y' = f(t, y) from t0 to t_end (t_end >= t0).

    step_cap(t, y) -> float      optional hard cap on the next step size
    on_accept(t, y) -> y         optional per-accepted-step state correction;
                                 the returned vector replaces the state
    Returns (ts, ys) as float arrays; ys has one row per accepted node,
    including the initial state.
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    ts = [t]
    ys = [y.copy()]
    if t_end == t0:
        return np.array(ts), np.array(ys)
    span = t_end - t0
    h = first_step if first_step is not None else _initial_step(f, t0, y, t_end, rtol, atol)
    h = min(h, max_step)
    for _ in range(max_steps):
        if step_cap is not None:
            h = min(h, step_cap(t, y))
        h = min(h, max_step, t_end - t)
        if h < 1e-14 * max(abs(t), abs(span)) or h <= 0.0:
            raise IntegrationError(t, "step size underflow (stiffness or singular dynamics)")
        y_new, err = dp45_step(f, t, y, h)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = np.sqrt(np.mean((err / scale) ** 2))
        if err_norm <= 1.0:
            t = t + h
            y = y_new
            if on_accept is not None:
                y = on_accept(t, y)
            ts.append(t)
            ys.append(y.copy())
            if t >= t_end - 1e-14 * max(abs(t_end), 1.0):
                return np.array(ts), np.array(ys)
            factor = _MAX_FACTOR if err_norm == 0.0 else min(
                _MAX_FACTOR, _SAFETY * err_norm ** -0.2)
            h = h * max(1.0, factor)
        else:
            h = h * max(_MIN_FACTOR, _SAFETY * err_norm ** -0.2)
    raise IntegrationError(t, f"exceeded {max_steps} steps")
