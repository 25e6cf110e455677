"""Direct length minimization over horizontal curves of rank-2 structures.

Controls are piecewise-constant unit directions u_k = (cos phi_k, sin phi_k)
on a fixed horizon [0, 1]; a free speed multiplier carries the length, which
keeps the objective smooth while preserving the arclength parametrization.
The endpoint constraint is handled with an augmented-Lagrangian outer loop
around an L-BFGS-B inner solve; endpoint gradients come either from forward
sensitivity integration or finite differences.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .errors import PreconditionError
from .odes import integrate


class DiscretizedControl:
    """N unit controls given by angles on the horizon [0, 1]."""

    __slots__ = ("angles",)

    def __init__(self, angles):
        self.angles = np.asarray(angles, dtype=float)
        if self.angles.ndim != 1 or self.angles.size < 1:
            raise ValueError("need a 1-d nonempty array of angles")

    @property
    def N(self):
        return self.angles.size

    @classmethod
    def constant(cls, N, angle):
        return cls(np.full(N, float(angle)))

    def directions(self):
        return np.column_stack([np.cos(self.angles), np.sin(self.angles)])

    def refine(self, new_N):
        """Piecewise-constant resampling onto a finer uniform grid."""
        if new_N % self.N != 0:
            raise ValueError("new_N must be a multiple of N")
        return DiscretizedControl(np.repeat(self.angles, new_N // self.N))

    def segment_times(self):
        return np.linspace(0.0, 1.0, self.N + 1)


@dataclass
class MinimizationResult:
    control: DiscretizedControl
    length: float
    endpoint_error: float
    iterations: int
    converged: bool
    endpoint: np.ndarray = field(default=None)


def _check_rank2(S):
    if S.rank != 2:
        raise PreconditionError("discretized angle controls require a rank-2 frame")


def shoot(S, x0, c, speed, *, rtol=1e-10, atol=1e-12):
    """Endpoint of the piecewise-constant control system at time 1."""
    _check_rank2(S)
    x = np.asarray(x0, dtype=float).copy()
    if speed == 0.0:
        return x
    X1, X2 = S.frame
    grid = c.segment_times()
    dirs = c.directions()
    for k in range(c.N):
        u1, u2 = speed * dirs[k]

        def rhs(t, y, u1=u1, u2=u2):
            return u1 * X1(y) + u2 * X2(y)

        _, ys = integrate(rhs, grid[k], x, grid[k + 1], rtol=rtol, atol=atol)
        x = ys[-1]
    return x


def shoot_with_jacobian(S, x0, c, speed, *, rtol=1e-10, atol=1e-12):
    """Endpoint and its Jacobian with respect to (angles, speed).

    Forward sensitivity: each segment integrates the state with its
    within-segment transition matrix, angle response and speed response;
    responses are then propagated through the downstream transitions.
    """
    _check_rank2(S)
    n = S.dim
    X1, X2 = S.frame
    x = np.asarray(x0, dtype=float).copy()
    grid = c.segment_times()
    N = c.N
    trans = np.zeros((N, n, n))
    v_seg = np.zeros((N, n))
    w_seg = np.zeros((N, n))
    if speed == 0.0:
        # endpoint is x0; only the speed derivative is nonzero
        dirs = c.directions()
        w = np.zeros(n)
        for k in range(N):
            u1, u2 = dirs[k]
            w += (grid[k + 1] - grid[k]) * (u1 * X1(x) + u2 * X2(x))
        J = np.zeros((n, N + 1))
        J[:, -1] = w
        return x.copy(), J
    dirs = c.directions()
    for k in range(N):
        c1, c2 = dirs[k]
        d1, d2 = -math.sin(c.angles[k]), math.cos(c.angles[k])

        def rhs(t, y, c1=c1, c2=c2, d1=d1, d2=d2):
            xx = y[:n]
            M = y[n:n + n * n].reshape(n, n)
            v = y[n + n * n:2 * n + n * n]
            w = y[2 * n + n * n:]
            f1, f2 = X1(xx), X2(xx)
            Ju = speed * (c1 * X1.jacobian(xx) + c2 * X2.jacobian(xx))
            dx = speed * (c1 * f1 + c2 * f2)
            dM = Ju @ M
            dv = Ju @ v + speed * (d1 * f1 + d2 * f2)
            dw = Ju @ w + (c1 * f1 + c2 * f2)
            return np.concatenate([dx, dM.ravel(), dv, dw])

        y0 = np.concatenate([x, np.eye(n).ravel(), np.zeros(n), np.zeros(n)])
        _, ys = integrate(rhs, grid[k], y0, grid[k + 1], rtol=rtol, atol=atol)
        yend = ys[-1]
        x = yend[:n]
        trans[k] = yend[n:n + n * n].reshape(n, n)
        v_seg[k] = yend[n + n * n:2 * n + n * n]
        w_seg[k] = yend[2 * n + n * n:]
    J = np.zeros((n, N + 1))
    T = np.eye(n)
    speed_grad = np.zeros(n)
    for k in range(N - 1, -1, -1):
        J[:, k] = T @ v_seg[k]
        speed_grad += T @ w_seg[k]
        T = T @ trans[k]
    J[:, -1] = speed_grad
    return x.copy(), J


def shoot_jacobian_fd(S, x0, c, speed, *, step=1e-6, rtol=1e-10, atol=1e-12):
    """Forward-difference Jacobian of the shooting map (oracle route)."""
    base = shoot(S, x0, c, speed, rtol=rtol, atol=atol)
    n = base.size
    J = np.zeros((n, c.N + 1))
    for k in range(c.N):
        angles = c.angles.copy()
        angles[k] += step
        J[:, k] = (shoot(S, x0, DiscretizedControl(angles), speed,
                         rtol=rtol, atol=atol) - base) / step
    J[:, -1] = (shoot(S, x0, c, speed + step, rtol=rtol, atol=atol) - base) / step
    return J


def minimize_length(S, x0, x1, N, init, *, init_speed=None, endpoint_tol=1e-6,
                    max_outer=50, inner_maxiter=80, mu0=10.0,
                    grad_mode="sensitivity", fd_step=1e-6, seed=0,
                    rtol=1e-10, atol=1e-12, restore_steps=6,
                    speed_stall_tol=1e-7):
    """Minimize curve length to reach x1, by augmented Lagrangian.

    The decision variables are the N control angles and the speed (=length);
    the penalty parameter grows tenfold per outer iteration, and each inner
    solve is followed by a minimal-norm Gauss-Newton restoration onto the
    endpoint manifold (the graded coordinates make pure penalty convergence
    slow).  Deterministic for a fixed init and seed.  Returns the best
    feasible iterate, flagged not converged if the endpoint tolerance was
    never reached.
    """
    _check_rank2(S)
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if init.N != N:
        init = init.refine(N) if N % init.N == 0 else DiscretizedControl(
            np.interp(np.linspace(0, 1, N, endpoint=False) + 0.5 / N,
                      np.linspace(0, 1, init.N, endpoint=False) + 0.5 / init.N,
                      init.angles))
    if init_speed is None:
        init_speed = max(float(np.linalg.norm(x1 - x0)), 1e-3)
    z = np.concatenate([init.angles, [float(init_speed)]])
    lam = np.zeros(x0.size)
    mu = float(mu0)
    bounds = [(None, None)] * N + [(0.0, None)]
    best = None
    prev_feasible_speed = None
    converged = False

    def endpoint_and_jac(zv):
        ctrl = DiscretizedControl(zv[:N])
        if grad_mode == "fd":
            endpoint = shoot(S, x0, ctrl, zv[-1], rtol=rtol, atol=atol)
            J = shoot_jacobian_fd(S, x0, ctrl, zv[-1], step=fd_step,
                                  rtol=rtol, atol=atol)
        else:
            endpoint, J = shoot_with_jacobian(S, x0, ctrl, zv[-1],
                                              rtol=rtol, atol=atol)
        return endpoint, J

    def plain_shoot(zv):
        return shoot(S, x0, DiscretizedControl(zv[:N]), zv[-1],
                     rtol=rtol, atol=atol)

    def gn_clean(zv, max_steps=10):
        # backtracked Gauss-Newton restricted to the well-conditioned
        # subspace; cleans the quadratic damage of a large step
        endpoint = plain_shoot(zv)
        err = float(np.linalg.norm(x1 - endpoint))
        for _ in range(max_steps):
            if err <= 0.1 * endpoint_tol:
                break
            _, J = endpoint_and_jac(zv)
            r = x1 - endpoint
            U, svals, Vt = np.linalg.svd(J, full_matrices=False)
            good = svals > 1e-3 * svals[0]
            delta = Vt[good].T @ ((U[:, good].T @ r) / svals[good])
            norm = float(np.linalg.norm(delta))
            if norm > 0.2:
                delta *= 0.2 / norm
            step, ok = 1.0, False
            for _bt in range(10):
                cand = zv + step * delta
                cand[-1] = max(cand[-1], 0.0)
                ept = plain_shoot(cand)
                et = float(np.linalg.norm(x1 - ept))
                if et < err:
                    zv, endpoint, err, ok = cand, ept, et, True
                    break
                step *= 0.5
            if not ok:
                break
        return zv, endpoint, err

    def restore(zv, endpoint, err):
        # feasibility restoration: a full (lightly damped) Gauss-Newton
        # step reaches the weakly controllable endpoint directions, whose
        # quadratic side effects are then cleaned in the well-conditioned
        # subspace; near-singular configurations contract linearly
        for _ in range(restore_steps):
            if err <= endpoint_tol:
                break
            _, J = endpoint_and_jac(zv)
            r = x1 - endpoint
            U, svals, Vt = np.linalg.svd(J, full_matrices=False)
            damp = (1e-7 * svals[0]) ** 2
            delta = Vt.T @ (svals / (svals**2 + damp) * (U.T @ r))
            norm = float(np.linalg.norm(delta))
            if norm > 1.0:
                delta *= 1.0 / norm
            accepted = False
            for step in (1.0, 0.5, 0.25):
                cand = zv + step * delta
                cand[-1] = max(cand[-1], 0.0)
                zc, epc, ec = gn_clean(cand)
                if ec < err * 0.95:
                    zv, endpoint, err = zc, epc, ec
                    accepted = True
                    break
            if not accepted:
                break
        return zv, endpoint, err

    outer_used = 0
    endpoint = shoot(S, x0, DiscretizedControl(z[:N]), z[-1], rtol=rtol,
                     atol=atol)
    err = float(np.linalg.norm(endpoint - x1))
    if err <= endpoint_tol:
        # a feasible init is a valid incumbent: refinement sweeps stay
        # monotone because the optimizer can only improve on it
        best = (float(z[-1]), z.copy(), err, endpoint.copy())
    for outer in range(max_outer):
        outer_used = outer + 1

        def al_fun(zv):
            endpoint, J = endpoint_and_jac(zv)
            cvec = endpoint - x1
            val = zv[-1] + lam @ cvec + 0.5 * mu * (cvec @ cvec)
            grad = J.T @ (lam + mu * cvec)
            grad[-1] += 1.0
            return val, grad

        res = _scipy_minimize(al_fun, z, jac=True, method="L-BFGS-B",
                              bounds=bounds,
                              options={"maxiter": inner_maxiter,
                                       "ftol": 1e-14, "gtol": 1e-10})
        z = res.x
        endpoint = shoot(S, x0, DiscretizedControl(z[:N]), z[-1],
                         rtol=rtol, atol=atol)
        err = float(np.linalg.norm(endpoint - x1))
        if endpoint_tol < err < 0.05:
            z, endpoint, err = restore(z, endpoint, err)
        cvec = endpoint - x1
        if err <= endpoint_tol:
            if best is None or z[-1] < best[0]:
                best = (float(z[-1]), z.copy(), err, endpoint.copy())
            if (prev_feasible_speed is not None
                    and abs(z[-1] - prev_feasible_speed)
                    <= speed_stall_tol * max(1.0, z[-1])):
                converged = True
                break
            prev_feasible_speed = float(z[-1])
        lam = lam + mu * cvec
        mu = min(mu * 10.0, 1e12)
    if best is None:
        return MinimizationResult(
            control=DiscretizedControl(z[:N]), length=float(z[-1]),
            endpoint_error=err, iterations=outer_used, converged=False,
            endpoint=endpoint,
        )
    return MinimizationResult(
        control=DiscretizedControl(best[1][:N]), length=best[0],
        endpoint_error=best[2], iterations=outer_used, converged=converged,
        endpoint=best[3],
    )


@dataclass
class CornerReport:
    margin: float
    corner_length: float
    endpoint: np.ndarray
    result: MinimizationResult


def corner_test(S, x0, v_minus, v_plus, eps_leg, N, *, endpoint_tol=1e-6,
                **minimize_kwargs):
    """Build a two-leg corner curve and try to shorten it.

    The margin (corner length minus optimized length, relative) is a lower
    bound witness of non-minimality, not an optimality gap estimate.
    """
    _check_rank2(S)
    if N % 2 != 0:
        raise ValueError("N must be even so the corner sits at a segment boundary")
    v_minus = np.asarray(v_minus, dtype=float)
    v_plus = np.asarray(v_plus, dtype=float)
    for v in (v_minus, v_plus):
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise PreconditionError("corner legs must be unit vectors")
    phi_m = math.atan2(v_minus[1], v_minus[0])
    phi_p = math.atan2(v_plus[1], v_plus[0])
    angles = np.concatenate([np.full(N // 2, phi_m), np.full(N // 2, phi_p)])
    corner = DiscretizedControl(angles)
    corner_length = 2.0 * eps_leg
    y = shoot(S, x0, corner, corner_length)
    res = minimize_length(S, x0, y, N, init=corner, init_speed=corner_length,
                          endpoint_tol=endpoint_tol, **minimize_kwargs)
    margin = (corner_length - res.length) / corner_length
    return CornerReport(margin=float(margin), corner_length=corner_length,
                        endpoint=y, result=res)


class SignVerdict(enum.Enum):
    CONSTANT_POSITIVE = "ConstantPositive"
    CONSTANT_NEGATIVE = "ConstantNegative"
    SIGN_CHANGE = "SignChange"


@dataclass
class SignCheckResult:
    verdict: SignVerdict
    change_times: list


def constant_sign_check(u, v, tol):
    """Sign pattern of v . u(t_k) for a control parallel to a fixed line.

    The samples must be unit and parallel to v within the angular tolerance;
    otherwise the precondition violation is reported with the worst node.
    """
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    samples = u.samples
    norms = np.linalg.norm(samples, axis=1)
    if np.any(np.abs(norms - 1.0) > tol):
        worst = int(np.argmax(np.abs(norms - 1.0)))
        raise PreconditionError(
            f"|u| != 1 beyond tol at t={u.times[worst]:g} "
            f"(deviation {abs(norms[worst] - 1.0):.3e})"
        )
    dots = samples @ v
    perp = np.linalg.norm(samples - np.outer(dots, v), axis=1)
    if np.any(perp > tol):
        worst = int(np.argmax(perp))
        raise PreconditionError(
            f"u not parallel to v beyond tol at t={u.times[worst]:g} "
            f"(transverse component {perp[worst]:.3e})"
        )
    signs = np.sign(dots)
    if np.all(signs > 0):
        return SignCheckResult(SignVerdict.CONSTANT_POSITIVE, [])
    if np.all(signs < 0):
        return SignCheckResult(SignVerdict.CONSTANT_NEGATIVE, [])
    changes = [float(u.times[k + 1])
               for k in range(len(signs) - 1) if signs[k + 1] != signs[k]]
    return SignCheckResult(SignVerdict.SIGN_CHANGE, changes)
