"""Normal and abnormal extremal dynamics for rank-2 structures.

The abnormal flow integrates the covector equation driven by the feedback
control u = sign * h/|h|, where h = (-h_212, h_112) is the pair of length-3
bracket functions.  Along such a flow the 2x2 trace-free matrix A of
length-4 bracket functions governs h' = A h/|h|; its singularity type at a
zero of h decides the possible limits of the control.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IntegrationError,
    InvariantViolationError,
    PreconditionError,
)
from .odes import dp45_step, integrate
from .structures import SRStructure
from .vfield import bracket_of_word, lie_bracket


class ExtremalState:
    """A point x with a covector p in chart coordinates; |p| > 0."""

    __slots__ = ("x", "p")

    def __init__(self, x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        if x.shape != p.shape or x.ndim != 1:
            raise ValueError("x and p must be 1-d vectors of equal length")
        if np.linalg.norm(p) == 0.0:
            raise ValueError("the covector of an extremal is nontrivial")
        self.x = x
        self.p = p

    @property
    def dim(self):
        return self.x.size

    def __repr__(self):
        return f"ExtremalState(x={self.x}, p={self.p})"


class AMatrix:
    """Trace-free matrix ((-h2112, -h2212), (h1112, h2112)) of a rank-2 lift."""

    __slots__ = ("h2112", "h2212", "h1112")

    def __init__(self, h2112, h2212, h1112):
        self.h2112 = float(h2112)
        self.h2212 = float(h2212)
        self.h1112 = float(h1112)

    @classmethod
    def from_matrix(cls, M, trace_tol=1e-12):
        M = np.asarray(M, dtype=float)
        if M.shape != (2, 2):
            raise ValueError("expected a 2x2 matrix")
        if abs(M[0, 0] + M[1, 1]) > trace_tol * max(1.0, np.abs(M).max()):
            raise ValueError("matrix is not trace-free")
        return cls(h2112=-M[0, 0], h2212=-M[0, 1], h1112=M[1, 0])

    @property
    def matrix(self):
        return np.array([[-self.h2112, -self.h2212],
                         [self.h1112, self.h2112]])

    @property
    def det(self):
        return -self.h2112 ** 2 + self.h2212 * self.h1112

    @property
    def trace(self):
        return 0.0

    def norm(self):
        return float(np.linalg.norm(self.matrix))

    def __repr__(self):
        return f"AMatrix(h2112={self.h2112:g}, h2212={self.h2212:g}, h1112={self.h1112:g})"


class SingularityClass(enum.Enum):
    """Type of A at a zero of h."""

    HYPERBOLIC_NEG_DET = "HyperbolicNegDet"
    DEGENERATE_ZERO_DET = "DegenerateZeroDet"
    ZERO_MATRIX = "ZeroMatrix"
    POSITIVE_DET_VIOLATION = "PositiveDetViolation"


def classify_zero(A, det_tol):
    """Classify A by the sign of its determinant at a detected zero of h.

    A positive determinant beyond det_tol contradicts minimality and is
    flagged as PositiveDetViolation.
    """
    if isinstance(A, AMatrix):
        det = A.det
        norm = A.norm()
    else:
        M = np.asarray(A, dtype=float)
        det = float(np.linalg.det(M))
        norm = float(np.linalg.norm(M))
    if det < -det_tol:
        return SingularityClass.HYPERBOLIC_NEG_DET
    if det > det_tol:
        return SingularityClass.POSITIVE_DET_VIOLATION
    if norm > det_tol:
        return SingularityClass.DEGENERATE_ZERO_DET
    return SingularityClass.ZERO_MATRIX


# ---------------------------------------------------------------------------
# Bracket functions
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=32)
def _rank2_brackets(S):
    if S.rank != 2:
        raise PreconditionError("abnormal feedback dynamics requires a rank-2 frame")
    X1, X2 = S.frame
    X12 = lie_bracket(X1, X2)
    X112 = lie_bracket(X1, X12)
    X212 = lie_bracket(X2, X12)
    return {
        "X1": X1, "X2": X2, "X12": X12, "X112": X112, "X212": X212,
        "X1112": lie_bracket(X1, X112),
        "X2112": lie_bracket(X2, X112),
        "X2212": lie_bracket(X2, X212),
        "X1212": lie_bracket(X1, X212),
    }


def hamiltonian_lift(S, st, i):
    """h_i = <p, X_i(x)> for the 1-based frame index i."""
    if not 1 <= i <= S.rank:
        raise ValueError(f"frame index {i} out of range")
    return float(st.p @ S.frame[i - 1](st.x))


def bracket_function(S, st, w):
    """h_w = <p, bracket_of_word(frame, w)(x)>."""
    field = bracket_of_word(S.frame, w)
    return float(st.p @ field(st.x))


def feedback_vector(S, st):
    """The pair h = (-h_212, h_112) driving the abnormal feedback control."""
    B = _rank2_brackets(S)
    return np.array([-(st.p @ B["X212"](st.x)), st.p @ B["X112"](st.x)])


def a_matrix(S, st, jacobi_tol=1e-10):
    """The matrix A from length-4 bracket functions, with Jacobi check.

    h_1212 is computed independently from word (1,2,1,2) and must agree with
    h_2112 within jacobi_tol; disagreement signals a bracket bug.
    """
    B = _rank2_brackets(S)
    h2112 = float(st.p @ B["X2112"](st.x))
    h2212 = float(st.p @ B["X2212"](st.x))
    h1112 = float(st.p @ B["X1112"](st.x))
    h1212 = float(st.p @ B["X1212"](st.x))
    if abs(h1212 - h2112) > jacobi_tol:
        raise InvariantViolationError(
            "jacobi-reduction",
            f"|h_1212 - h_2112| = {abs(h1212 - h2112):.3e} exceeds {jacobi_tol:g}",
        )
    return AMatrix(h2112=h2112, h2212=h2212, h1112=h1112)


def sample_abnormal_covector(S, point, rng, min_h=1e-3, max_tries=1000):
    """Uniform unit covector in the annihilator of D^2 at ``point``.

    Rejects samples with |h| < min_h so the feedback flow starts off the
    singular set.
    """
    point = np.asarray(point, dtype=float)
    B = _rank2_brackets(S)
    G = np.vstack([B["X1"](point), B["X2"](point), B["X12"](point)])
    _, sval, vt = np.linalg.svd(G)
    tol = 1e-12 * (sval[0] if sval.size and sval[0] > 0 else 1.0)
    null = vt[np.sum(sval > tol):]
    if null.shape[0] == 0:
        raise PreconditionError("the annihilator of D^2 is trivial at this point")
    for _ in range(max_tries):
        p = null.T @ rng.standard_normal(null.shape[0])
        norm = np.linalg.norm(p)
        if norm == 0.0:
            continue
        p = p / norm
        h = np.array([-p @ B["X212"](point), p @ B["X112"](point)])
        if np.linalg.norm(h) >= min_h:
            return p
    raise PreconditionError(f"no admissible covector with |h| >= {min_h} found")


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass
class NormalTrajectory:
    """Output grid of the normal Hamiltonian flow."""

    times: np.ndarray
    X: np.ndarray
    P: np.ndarray
    energy: np.ndarray

    def state(self, i):
        return ExtremalState(self.X[i], self.P[i])


@dataclass
class AbnormalTrajectory:
    """Recorded abnormal feedback flow.

    H holds the feedback vector h = (-h_212, h_112) per node, A the matrix
    entries, goh_residuals the pre-projection max of |h1|, |h2|, |h12| and
    proj_disps the norms of the covector corrections.
    """

    structure: SRStructure
    sign: int
    times: np.ndarray
    X: np.ndarray
    P: np.ndarray
    U: np.ndarray
    H: np.ndarray
    A: np.ndarray
    goh_residuals: np.ndarray
    proj_disps: np.ndarray
    zeros: list
    zero_tol: float
    meta: dict = field(default_factory=dict)

    def state(self, i):
        return ExtremalState(self.X[i], self.P[i])

    def h_norms(self):
        return np.linalg.norm(self.H, axis=1)

    def a_matrix_at(self, i):
        M = self.A[i]
        return AMatrix(h2112=-M[0, 0], h2212=-M[0, 1], h1112=M[1, 0])

    def node_at_time(self, t, tol=1e-9):
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > tol * max(1.0, abs(self.times[-1])):
            raise ValueError(f"no trajectory node at t={t}")
        return idx


@dataclass
class PlanarRun:
    """Planar normal form of the feedback dynamics: h' = sign * A h/|h|."""

    times: np.ndarray
    H: np.ndarray
    zeros: list
    zero_tol: float


# ---------------------------------------------------------------------------
# Flows
# ---------------------------------------------------------------------------

def normal_flow(S, st0, T, steps):
    """Integrate the normal Hamiltonian flow of H = (1/2) sum h_i^2.

    The output grid has ``steps`` uniform intervals; integration between
    nodes is adaptive with local tolerance 1e-10.  Energy conservation within
    1e-8 relative is enforced on the output.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    n = S.dim
    frame = S.frame

    def h_vals(x, p):
        return np.array([p @ Xi(x) for Xi in frame])

    def rhs(t, y):
        x, p = y[:n], y[n:]
        h = h_vals(x, p)
        xdot = np.zeros(n)
        pdot = np.zeros(n)
        for hi, Xi in zip(h, frame):
            xdot += hi * Xi(x)
            pdot -= hi * (Xi.jacobian(x).T @ p)
        return np.concatenate([xdot, pdot])

    def energy(x, p):
        return 0.5 * float(np.sum(h_vals(x, p) ** 2))

    grid = np.linspace(0.0, T, steps + 1)
    y = np.concatenate([st0.x, st0.p])
    X = [st0.x.copy()]
    P = [st0.p.copy()]
    E = [energy(st0.x, st0.p)]
    for t0, t1 in zip(grid[:-1], grid[1:]):
        if t1 == t0:
            ts, ys = np.array([t0]), np.array([y])
        else:
            ts, ys = integrate(rhs, t0, y, t1, rtol=1e-10, atol=1e-12)
        y = ys[-1]
        X.append(y[:n].copy())
        P.append(y[n:].copy())
        E.append(energy(y[:n], y[n:]))
    E = np.array(E)
    scale = max(abs(E[0]), 1e-300)
    drift = float(np.max(np.abs(E - E[0]))) / scale
    if drift > 1e-8:
        raise InvariantViolationError(
            "normal-energy-conservation",
            f"relative energy drift {drift:.3e} exceeds 1e-8",
        )
    return NormalTrajectory(times=grid, X=np.array(X), P=np.array(P), energy=E)


def _goh_projection(B, x, p):
    """Minimal-norm correction of p onto {h1 = h2 = h12 = 0} at fixed x."""
    G = np.vstack([B["X1"](x), B["X2"](x), B["X12"](x)])
    g = G @ p
    residual = float(np.max(np.abs(g)))
    dp = -np.linalg.pinv(G, rcond=1e-13) @ g
    return p + dp, residual, float(np.linalg.norm(dp))


def abnormal_feedback_flow(S, st0, T, sign, *, zero_tol=None, goh_tol=None,
                           proj_tol=1e-8, rtol=1e-10, atol=1e-12,
                           max_step=None, jacobi_tol=1e-10):
    """Integrate the abnormal lift with feedback control u = sign * h/|h|.

    Stops at T or at the first detected zero of h: |h| below zero_tol
    (default 1e-9 |h(0)|) while nonincreasing over the last 5 accepted
    steps; the crossing time is refined by bisection and recorded in
    ``zeros``.  The Goh quantities h1, h2, h12 are re-projected to zero
    after every accepted step; pre-projection residuals and correction
    norms are recorded and bounded.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if T < 0:
        raise ValueError("horizon must be non-negative")
    B = _rank2_brackets(S)
    n = S.dim
    x0, p0 = st0.x, st0.p

    def h_of(x, p):
        return np.array([-(p @ B["X212"](x)), p @ B["X112"](x)])

    def a_entries(x, p):
        return (float(p @ B["X2112"](x)), float(p @ B["X2212"](x)),
                float(p @ B["X1112"](x)), float(p @ B["X1212"](x)))

    goh0 = np.array([p0 @ B["X1"](x0), p0 @ B["X2"](x0), p0 @ B["X12"](x0)])
    if np.max(np.abs(goh0)) > 1e-12:
        raise PreconditionError(
            f"h1, h2, h12 must vanish at the initial state (max {np.max(np.abs(goh0)):.2e})"
        )
    h0 = h_of(x0, p0)
    h0_norm = float(np.linalg.norm(h0))
    if h0_norm == 0.0:
        raise PreconditionError("|h| must be positive at the initial state")
    if zero_tol is None:
        zero_tol = 1e-9 * h0_norm
    scale = max(1.0, float(np.linalg.norm(p0)))
    if goh_tol is None:
        goh_tol = 1e-8 * scale
    if max_step is None:
        max_step = T / 1024.0 if T > 0 else np.inf

    def rhs(t, y):
        x, p = y[:n], y[n:]
        h = h_of(x, p)
        nh = math.hypot(h[0], h[1])
        u1 = sign * h[0] / nh
        u2 = sign * h[1] / nh
        xdot = u1 * B["X1"](x) + u2 * B["X2"](x)
        J = u1 * B["X1"].jacobian(x) + u2 * B["X2"].jacobian(x)
        return np.concatenate([xdot, -(J.T @ p)])

    times = [0.0]
    nodes = [np.concatenate([x0, p0])]
    goh_res = [float(np.max(np.abs(goh0)))]
    proj_disp = [0.0]
    zeros = []

    def record_arrays():
        ts = np.array(times)
        Y = np.array(nodes)
        X, P = Y[:, :n], Y[:, n:]
        U = np.zeros((len(ts), 2))
        H = np.zeros((len(ts), 2))
        A = np.zeros((len(ts), 2, 2))
        for i in range(len(ts)):
            h = h_of(X[i], P[i])
            H[i] = h
            nh = np.linalg.norm(h)
            U[i] = sign * h / nh if nh > 0 else 0.0
            h2112, h2212, h1112, h1212 = a_entries(X[i], P[i])
            if abs(h1212 - h2112) > jacobi_tol:
                raise InvariantViolationError(
                    "jacobi-reduction",
                    f"|h_1212 - h_2112| = {abs(h1212 - h2112):.3e} at node {i}",
                )
            A[i] = [[-h2112, -h2212], [h1112, h2112]]
        return AbnormalTrajectory(
            structure=S, sign=sign, times=ts, X=X, P=P, U=U, H=H, A=A,
            goh_residuals=np.array(goh_res), proj_disps=np.array(proj_disp),
            zeros=zeros, zero_tol=zero_tol,
            meta={"rtol": rtol, "atol": atol, "goh_tol": goh_tol},
        )

    if T == 0:
        return record_arrays()

    def a_norm(x, p):
        h2112, h2212, h1112, _ = a_entries(x, p)
        return math.sqrt(2 * h2112 ** 2 + h2212 ** 2 + h1112 ** 2)

    def step_cap(t, y):
        x, p = y[:n], y[n:]
        nh = np.linalg.norm(h_of(x, p))
        if nh < 0.1 * h0_norm:
            # keep 1/|h| nearly constant per step so the rescaled clock
            # s = int dt/|h| stays accurate through the zero approach
            return 0.1 * nh / max(a_norm(x, p), 1e-30)
        return np.inf

    t = 0.0
    y = nodes[0].copy()
    h = min(max_step, 1e-3 * T)
    recent = [h0_norm]
    max_steps = 5_000_000
    for _ in range(max_steps):
        h = min(h, max_step, step_cap(t, y), T - t)
        if h <= 0 or h < 1e-15 * max(T, 1.0):
            raise IntegrationError(t, "step size underflow in abnormal flow")
        y_new, err = dp45_step(rhs, t, y, h)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = np.sqrt(np.mean((err / sc) ** 2))
        if err_norm > 1.0:
            h *= max(0.2, 0.9 * err_norm ** -0.2)
            continue
        t_prev, y_prev = t, y.copy()
        t, y = t + h, y_new
        p_corr, res, disp = _goh_projection(B, y[:n], y[n:])
        if res > goh_tol:
            raise InvariantViolationError(
                "goh-invariance",
                f"pre-projection residual {res:.3e} exceeds {goh_tol:g} at t={t:.6f}",
            )
        if disp > proj_tol:
            raise InvariantViolationError(
                "goh-projection-bound",
                f"projection displacement {disp:.3e} exceeds {proj_tol:g} at t={t:.6f}",
            )
        y[n:] = p_corr
        hn = float(np.linalg.norm(h_of(y[:n], y[n:])))
        nonincreasing = len(recent) >= 5 and all(
            a >= b - 1e-15 for a, b in zip(recent[-5:], recent[-4:] + [hn]))
        if hn < zero_tol and nonincreasing:
            t_cross, y_cross = _refine_zero_crossing(
                rhs, t_prev, y_prev, t - t_prev, zero_tol,
                lambda yy: float(np.linalg.norm(h_of(yy[:n], yy[n:]))),
                rtol, atol)
            p_corr, res, disp = _goh_projection(B, y_cross[:n], y_cross[n:])
            y_cross[n:] = p_corr
            times.append(t_cross)
            nodes.append(y_cross)
            goh_res.append(res)
            proj_disp.append(disp)
            zeros.append(t_cross)
            return record_arrays()
        times.append(t)
        nodes.append(y.copy())
        goh_res.append(res)
        proj_disp.append(disp)
        recent.append(hn)
        if len(recent) > 8:
            recent.pop(0)
        if t >= T - 1e-14 * max(T, 1.0):
            return record_arrays()
        factor = 5.0 if err_norm == 0.0 else min(5.0, 0.9 * err_norm ** -0.2)
        h = h * max(1.0, factor)
    raise IntegrationError(t, "abnormal flow exceeded the step budget")


def _refine_zero_crossing(rhs, t0, y0, dt_max, level, norm_of, rtol, atol):
    """Bisect on the step size for the time where the norm hits ``level``."""

    def state_at(dt):
        if dt <= 0:
            return y0.copy()
        _, ys = integrate(rhs, t0, y0, t0 + dt, rtol=rtol, atol=atol)
        return ys[-1]

    lo, hi = 0.0, dt_max
    y_hi = state_at(hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        y_mid = state_at(mid)
        if norm_of(y_mid) > level:
            lo = mid
        else:
            hi, y_hi = mid, y_mid
        if hi - lo < 1e-14 * max(1.0, t0 + dt_max):
            break
    return t0 + hi, y_hi


def planar_feedback_flow(A, h0, T, sign=1, *, zero_tol=None, rtol=1e-10,
                         atol=1e-12, max_step=None):
    """Integrate the planar normal form h' = sign * A(t) h/|h|.

    A may be a constant 2x2 array or a callable t -> 2x2 array.  Zero
    detection follows the same two-sided rule as the full flow.
    """
    if callable(A):
        a_of = A
    else:
        A_const = np.asarray(A, dtype=float)
        a_of = lambda t: A_const
    h0 = np.asarray(h0, dtype=float)
    h0_norm = float(np.linalg.norm(h0))
    if h0_norm == 0.0:
        raise PreconditionError("|h| must be positive initially")
    if zero_tol is None:
        zero_tol = 1e-9 * h0_norm
    if max_step is None:
        max_step = T / 1024.0 if T > 0 else np.inf

    def rhs(t, y):
        nh = math.hypot(y[0], y[1])
        return sign * (a_of(t) @ y) / nh

    def step_cap(t, y):
        nh = math.hypot(y[0], y[1])
        if nh < 0.1 * h0_norm:
            return 0.1 * nh / max(np.linalg.norm(a_of(t)), 1e-30)
        return np.inf

    times = [0.0]
    nodes = [h0.copy()]
    zeros = []
    if T > 0:
        t, y = 0.0, h0.copy()
        h = min(max_step, 1e-3 * T)
        recent = [h0_norm]
        for _ in range(5_000_000):
            h = min(h, max_step, step_cap(t, y), T - t)
            if h <= 0 or h < 1e-15 * max(T, 1.0):
                raise IntegrationError(t, "step size underflow in planar flow")
            y_new, err = dp45_step(rhs, t, y, h)
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = np.sqrt(np.mean((err / sc) ** 2))
            if err_norm > 1.0:
                h *= max(0.2, 0.9 * err_norm ** -0.2)
                continue
            t_prev, y_prev = t, y.copy()
            t, y = t + h, y_new
            hn = float(np.linalg.norm(y))
            nonincreasing = len(recent) >= 5 and all(
                a >= b - 1e-15 for a, b in zip(recent[-5:], recent[-4:] + [hn]))
            if hn < zero_tol and nonincreasing:
                t_cross, y_cross = _refine_zero_crossing(
                    rhs, t_prev, y_prev, t - t_prev, zero_tol,
                    lambda yy: float(np.linalg.norm(yy)), rtol, atol)
                times.append(t_cross)
                nodes.append(y_cross)
                zeros.append(t_cross)
                break
            times.append(t)
            nodes.append(y.copy())
            recent.append(hn)
            if len(recent) > 8:
                recent.pop(0)
            if t >= T - 1e-14 * max(T, 1.0):
                break
            factor = 5.0 if err_norm == 0.0 else min(5.0, 0.9 * err_norm ** -0.2)
            h = h * max(1.0, factor)
    return PlanarRun(times=np.array(times), H=np.array(nodes), zeros=zeros,
                     zero_tol=zero_tol)


# ---------------------------------------------------------------------------
# Control limit at a zero of h
# ---------------------------------------------------------------------------

@dataclass
class LimitDirection:
    """Extrapolated control limit at a zero of h and its eigenline residual."""

    direction: np.ndarray
    residual_rad: float
    eigenvalue_sign: int
    a_class: SingularityClass


def _angle_dist_mod_pi(a, b):
    d = (a - b) % math.pi
    return min(d, math.pi - d)


def limit_control_direction(traj, t1, *, tail_fraction=0.1, min_nodes=20,
                            det_tol=1e-8):
    """Extrapolate u(t) as t -> t1 and compare with the eigenlines of A(t1).

    Richardson-style extrapolation: the unwrapped control angle over the
    trailing nodes is fit in tau = t1 - t and evaluated at tau = 0.
    """
    if not any(abs(z - t1) <= 1e-12 * max(1.0, abs(t1)) for z in traj.zeros):
        raise PreconditionError(f"t1={t1} is not a recorded zero of h")
    t_start = traj.times[0]
    window = traj.times >= t1 - tail_fraction * (t1 - t_start)
    window &= traj.times <= t1
    idx = np.nonzero(window)[0]
    if idx.size < min_nodes:
        raise PreconditionError(
            f"only {idx.size} nodes in the trailing {tail_fraction:.0%} of the "
            f"interval; need >= {min_nodes}"
        )
    A1 = traj.A[idx[-1]]
    a_class = classify_zero(AMatrix.from_matrix(A1), det_tol)
    if a_class is SingularityClass.ZERO_MATRIX:
        raise PreconditionError("A(t1) is the zero matrix; no eigenline to compare")
    U = traj.U[idx]
    angles = np.unwrap(np.arctan2(U[:, 1], U[:, 0]))
    tau = t1 - traj.times[idx]
    deg = 2 if idx.size >= 30 else 1
    coeffs = np.polyfit(tau, angles, deg)
    phi = float(np.polyval(coeffs, 0.0))
    direction = np.array([math.cos(phi), math.sin(phi)])

    evals, evecs = np.linalg.eig(A1)
    if np.max(np.abs(evals.imag)) > 1e-9 * max(np.abs(evals).max(), 1.0):
        raise PreconditionError("A(t1) has no real eigenline (elliptic type)")
    evals = evals.real
    evecs = evecs.real
    best = None
    for k in range(2):
        v = evecs[:, k]
        ang = math.atan2(v[1], v[0])
        dist = _angle_dist_mod_pi(phi, ang)
        if best is None or dist < best[0]:
            best = (dist, int(np.sign(evals[k])))
    return LimitDirection(direction=direction, residual_rad=best[0],
                          eigenvalue_sign=best[1], a_class=a_class)


# ---------------------------------------------------------------------------
# Kernel-following continuation (h identically zero)
# ---------------------------------------------------------------------------

@dataclass
class KernelRun:
    """Flow with u(t) in ker A(t) while h stays on the singular set."""

    times: np.ndarray
    X: np.ndarray
    P: np.ndarray
    U: np.ndarray
    escaped: bool


def kernel_flow(S, st0, T, sigma=1, *, h_tol=1e-9, rtol=1e-10, atol=1e-12,
                max_step=None):
    """Follow the one-dimensional kernel of A while h vanishes.

    This reports the singular-set continuation without certifying
    minimality.  Stops early (escaped=True) if |h| leaves h_tol.
    """
    if sigma not in (1, -1):
        raise ValueError("sigma must be +1 or -1")
    B = _rank2_brackets(S)
    n = S.dim

    def h_of(x, p):
        return np.array([-(p @ B["X212"](x)), p @ B["X112"](x)])

    def a_of(x, p):
        h2112 = p @ B["X2112"](x)
        h2212 = p @ B["X2212"](x)
        h1112 = p @ B["X1112"](x)
        return np.array([[-h2112, -h2212], [h1112, h2112]])

    h0 = h_of(st0.x, st0.p)
    if np.linalg.norm(h0) > h_tol:
        raise PreconditionError("kernel following requires h = 0 initially")
    A0 = a_of(st0.x, st0.p)
    if np.linalg.norm(A0) < 1e-12:
        raise PreconditionError("A = 0: the kernel is not one-dimensional")
    _, svals, vt = np.linalg.svd(A0)
    if svals[1] > 1e-9 * svals[0]:
        raise PreconditionError("A is invertible: no kernel direction to follow")
    v_ref = vt[1]

    def kernel_dir(x, p, prev):
        _, sv, vtl = np.linalg.svd(a_of(x, p))
        v = vtl[1]
        if v @ prev < 0:
            v = -v
        return v

    state = {"v": v_ref}

    def rhs(t, y):
        x, p = y[:n], y[n:]
        v = kernel_dir(x, p, state["v"])
        state["v"] = v
        u1, u2 = sigma * v
        xdot = u1 * B["X1"](x) + u2 * B["X2"](x)
        J = u1 * B["X1"].jacobian(x) + u2 * B["X2"].jacobian(x)
        return np.concatenate([xdot, -(J.T @ p)])

    if max_step is None:
        max_step = T / 256.0 if T > 0 else np.inf
    escaped = False
    if T == 0:
        ts = np.array([0.0])
        ys = np.array([np.concatenate([st0.x, st0.p])])
    else:
        ts, ys = integrate(rhs, 0.0, np.concatenate([st0.x, st0.p]), T,
                           rtol=rtol, atol=atol, max_step=max_step)
    U = np.zeros((len(ts), 2))
    prev = v_ref
    for i in range(len(ts)):
        x, p = ys[i, :n], ys[i, n:]
        if np.linalg.norm(h_of(x, p)) > h_tol:
            escaped = True
            ts, ys, U = ts[: i + 1], ys[: i + 1], U[: i + 1]
            break
        v = kernel_dir(x, p, prev)
        prev = v
        U[i] = sigma * v
    return KernelRun(times=np.asarray(ts), X=np.asarray(ys)[:, :n],
                     P=np.asarray(ys)[:, n:], U=U, escaped=escaped)
