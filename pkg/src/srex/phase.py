"""Rescaled planar dynamics of the feedback vector near a zero of h.

After the time change s = int dtau/|h| and conjugation by P, the feedback
vector satisfies h'(s) = A(s) h(s) with A = P^-1 A P.  In polar coordinates
(rho, theta) the degenerate (nilpotent-limit) case reads

    rho'/rho = sin(theta) cos(theta) + f,      theta' = -sin(theta)^2 + g,

with perturbations f, g built from the conjugated coefficients.  This module
simulates both the degenerate and the elliptic normal forms, detects the
convergence/rotation dichotomy of the angle, and checks the quantitative
window estimates that rule the rotation regime out for minimizers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InconclusiveDichotomyError,
    IntegrationError,
    InvariantViolationError,
    PreconditionError,
    RadialCollapseError,
)
from .odes import integrate

_LOG_FLOOR = math.log(1e-300)


class PhasePath:
    """Polar path (s, rho, theta) with coefficient and perturbation traces.

    theta is a continuous unwrapped lift; consecutive recorded nodes never
    jump by pi/2 or more.  ``case`` distinguishes the degenerate
    parametrization (mu = zeta + beta) from the elliptic-exclusion one
    (mu = (zeta+beta)/2, eta = (zeta-beta)/2).
    """

    __slots__ = ("s", "rho", "theta", "alpha", "beta", "zeta", "f", "g",
                 "case", "dtheta", "dlogrho", "meta")

    def __init__(self, s, rho, theta, alpha, beta, zeta, f=None, g=None,
                 case="degenerate", dtheta=None, dlogrho=None, meta=None):
        s = np.asarray(s, dtype=float)
        rho = np.asarray(rho, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if np.any(rho <= 0.0):
            raise InvariantViolationError("phase-rho-positive",
                                          "rho must stay strictly positive")
        jumps = np.abs(np.diff(theta))
        if jumps.size and np.max(jumps) >= math.pi / 2:
            raise InvariantViolationError(
                "theta-unwrapping",
                f"angle jump {np.max(jumps):.3f} rad >= pi/2 between nodes",
            )
        if case not in ("degenerate", "elliptic"):
            raise ValueError("case must be 'degenerate' or 'elliptic'")
        self.s = s
        self.rho = rho
        self.theta = theta
        self.alpha = np.asarray(alpha, dtype=float)
        self.beta = np.asarray(beta, dtype=float)
        self.zeta = np.asarray(zeta, dtype=float)
        self.case = case
        if f is None or g is None:
            f, g = _perturbations(self.alpha, self.beta, self.zeta, theta, case)
        self.f = np.asarray(f, dtype=float)
        self.g = np.asarray(g, dtype=float)
        self.dtheta = None if dtheta is None else np.asarray(dtheta, dtype=float)
        self.dlogrho = None if dlogrho is None else np.asarray(dlogrho, dtype=float)
        self.meta = meta or {}

    @property
    def mu(self):
        if self.case == "degenerate":
            return self.zeta + self.beta
        return 0.5 * (self.zeta + self.beta)

    @property
    def eta(self):
        return 0.5 * (self.zeta - self.beta)

    def xy(self):
        return self.rho * np.cos(self.theta), self.rho * np.sin(self.theta)

    def span(self):
        return float(self.s[-1] - self.s[0])

    def __len__(self):
        return self.s.size


def _perturbations(alpha, beta, zeta, theta, case):
    # degenerate reduction: rho'/rho = sc + f, theta' = -sin^2 + g
    if case == "degenerate":
        mu = zeta + beta
    else:
        mu = 0.5 * (zeta + beta)
    st, ct = np.sin(theta), np.cos(theta)
    f = -alpha * np.cos(2 * theta) + (mu - 1.0) * st * ct
    g = alpha * np.sin(2 * theta) + zeta + (1.0 - mu) * st * st
    return f, g


def _as_fun(c):
    if callable(c):
        return c
    value = float(c)
    return lambda s: value


# ---------------------------------------------------------------------------
# Simulators
# ---------------------------------------------------------------------------

def simulate_polar(alpha, beta, zeta, rho0, theta0, s_max, *, rtol=1e-10,
                   atol=1e-10, max_step_dense=0.1, max_step_coarse=50.0,
                   dense_band=0.02, dtheta_cap=0.02):
    """Integrate the degenerate polar system with coefficient functions.

    State is (theta, log rho); the step size is kept small whenever
    |sin theta| exceeds ``dense_band`` so window quadrature downstream stays
    accurate, and is angle-limited elsewhere.  Raises RadialCollapseError if
    rho underflows 1e-300.
    """
    if rho0 <= 0:
        raise PreconditionError("rho0 must be positive")
    fa, fb, fz = _as_fun(alpha), _as_fun(beta), _as_fun(zeta)

    def theta_dot(s, th):
        a, b, z = fa(s), fb(s), fz(s)
        mu = z + b
        st = math.sin(th)
        return -mu * st * st + a * math.sin(2 * th) + z

    def rhs(s, y):
        th = y[0]
        a, b, z = fa(s), fb(s), fz(s)
        mu = z + b
        st, ct = math.sin(th), math.cos(th)
        dth = -mu * st * st + a * math.sin(2 * th) + z
        dl = mu * st * ct - a * math.cos(2 * th)
        return np.array([dth, dl])

    def step_cap(s, y):
        if abs(math.sin(y[0])) >= dense_band:
            return max_step_dense
        dth = abs(theta_dot(s, y[0]))
        if dth < 1e-300:
            return max_step_coarse
        return min(max_step_coarse, max(max_step_dense, dtheta_cap / dth))

    y0 = np.array([float(theta0), math.log(rho0)])
    try:
        ss, ys = integrate(rhs, 0.0, y0, float(s_max), rtol=rtol, atol=atol,
                           step_cap=step_cap)
    except RadialCollapseError:
        raise
    logrho = ys[:, 1]
    under = np.nonzero(logrho < _LOG_FLOOR)[0]
    if under.size:
        raise RadialCollapseError(float(ss[under[0]]),
                                  "rho underflowed 1e-300 (radial collapse)")
    over = np.nonzero(logrho > -_LOG_FLOOR)[0]
    if over.size:
        raise IntegrationError(float(ss[over[0]]),
                               "rho overflowed the floating-point range")
    theta = ys[:, 0]
    a_arr = np.array([fa(s) for s in ss])
    b_arr = np.array([fb(s) for s in ss])
    z_arr = np.array([fz(s) for s in ss])
    mu = z_arr + b_arr
    st, ct = np.sin(theta), np.cos(theta)
    dtheta = -mu * st * st + a_arr * np.sin(2 * theta) + z_arr
    dlogrho = mu * st * ct - a_arr * np.cos(2 * theta)
    return PhasePath(ss, np.exp(logrho), theta, a_arr, b_arr, z_arr,
                     case="degenerate", dtheta=dtheta, dlogrho=dlogrho,
                     meta={"rho0": rho0, "theta0": theta0})


def simulate_elliptic_polar(alpha, beta, zeta, rho0, theta0, s_max, *,
                            rtol=1e-10, atol=1e-12, dtheta_cap=0.05):
    """Integrate the elliptic-exclusion polar system.

    Here rho' = -alpha cos 2theta + mu sin 2theta and
    theta' = (alpha sin 2theta + mu cos 2theta + eta)/rho with
    mu = (zeta+beta)/2, eta = (zeta-beta)/2.
    """
    if rho0 <= 0:
        raise PreconditionError("rho0 must be positive")
    fa, fb, fz = _as_fun(alpha), _as_fun(beta), _as_fun(zeta)

    def rhs(s, y):
        th, rho = y
        a, b, z = fa(s), fb(s), fz(s)
        mu = 0.5 * (z + b)
        eta = 0.5 * (z - b)
        s2, c2 = math.sin(2 * th), math.cos(2 * th)
        w = a * s2 + mu * c2 + eta
        return np.array([w / rho, -a * c2 + mu * s2])

    def step_cap(s, y):
        dth = abs(rhs(s, y)[0])
        if dth < 1e-300:
            return np.inf
        return dtheta_cap / dth

    y0 = np.array([float(theta0), float(rho0)])
    ss, ys = integrate(rhs, 0.0, y0, float(s_max), rtol=rtol, atol=atol,
                       step_cap=step_cap)
    theta, rho = ys[:, 0], ys[:, 1]
    under = np.nonzero(rho < 1e-300)[0]
    if under.size:
        raise RadialCollapseError(float(ss[under[0]]),
                                  "rho underflowed 1e-300 (radial collapse)")
    a_arr = np.array([fa(s) for s in ss])
    b_arr = np.array([fb(s) for s in ss])
    z_arr = np.array([fz(s) for s in ss])
    mu = 0.5 * (z_arr + b_arr)
    eta = 0.5 * (z_arr - b_arr)
    w = a_arr * np.sin(2 * theta) + mu * np.cos(2 * theta) + eta
    dtheta = w / rho
    dlogrho = (-a_arr * np.cos(2 * theta) + mu * np.sin(2 * theta)) / rho
    return PhasePath(ss, rho, theta, a_arr, b_arr, z_arr, case="elliptic",
                     dtheta=dtheta, dlogrho=dlogrho,
                     meta={"rho0": rho0, "theta0": theta0})


# ---------------------------------------------------------------------------
# Conjugation frames and time rescaling
# ---------------------------------------------------------------------------

@dataclass
class ConjugationFrame:
    """Invertible P bringing A(t1) to its hyperbolic or nilpotent normal form."""

    P: np.ndarray
    target: str          # "hyperbolic" or "nilpotent"
    a: float = 0.0       # hyperbolic rate, 0 for the nilpotent form

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        if abs(np.linalg.det(self.P)) <= 1e-12:
            raise InvariantViolationError("conjugation-invertible",
                                          "det P too close to zero")


def conjugation_frame(A, det_tol=1e-8):
    """Build P with P^-1 A P = diag(-a, a) or the nilpotent Jordan block."""
    M = A.matrix if hasattr(A, "matrix") else np.asarray(A, dtype=float)
    det = float(np.linalg.det(M))
    norm = float(np.linalg.norm(M))
    if det < -det_tol:
        evals, evecs = np.linalg.eig(M)
        evals = evals.real
        evecs = evecs.real
        order = np.argsort(evals)          # negative eigenvalue first
        P = np.column_stack([evecs[:, order[0]], evecs[:, order[1]]])
        P /= np.linalg.norm(P, axis=0)
        a = float(-evals[order[0]])
        frame = ConjugationFrame(P=P, target="hyperbolic", a=a)
        _check_target(frame, M, np.diag([-a, a]))
        return frame
    if norm > det_tol >= abs(det):
        _, svals, vt = np.linalg.svd(M)
        w = vt[0]                          # most non-kernel direction
        p1 = M @ w
        sigma = np.linalg.norm(p1)
        P = np.column_stack([p1 / sigma, w / sigma])
        frame = ConjugationFrame(P=P, target="nilpotent", a=0.0)
        _check_target(frame, M, np.array([[0.0, 1.0], [0.0, 0.0]]))
        return frame
    if det > det_tol:
        raise PreconditionError("A has positive determinant: no real normal form "
                                "used by the phase analysis")
    raise PreconditionError("A is numerically zero: no conjugation frame")


def _check_target(frame, M, target):
    got = np.linalg.solve(frame.P, M @ frame.P)
    if np.max(np.abs(got - target)) > 1e-9 * max(1.0, np.abs(target).max()):
        raise InvariantViolationError(
            "conjugation-normal-form",
            f"P^-1 A P differs from the target by {np.max(np.abs(got - target)):.2e}",
        )


def rescale_time(traj, t_star, P, *, case="degenerate", consistency_tol=1e-5):
    """Reparametrize a recorded trajectory by s = int_t*^t dtau/|h|.

    Returns the conjugated polar path with coefficient traces from
    A(s) = P^-1 A P and verifies h'(s) = A(s) h(s) by finite differences to
    the requested relative tolerance.
    """
    P = np.asarray(P, dtype=float)
    idx0 = traj.node_at_time(t_star)
    tt = traj.times[idx0:]
    if tt.size < 3:
        raise PreconditionError("too few nodes past t_star to rescale")
    Hh = traj.H[idx0:]
    norms = np.linalg.norm(Hh, axis=1)
    if np.any(norms == 0.0):
        raise PreconditionError("h vanishes inside the rescaling interval")
    inv = 1.0 / norms
    ds = np.diff(tt) * 0.5 * (inv[:-1] + inv[1:])
    s = np.concatenate([[0.0], np.cumsum(ds)])
    Pinv = np.linalg.inv(P)
    Hfrak = Hh @ Pinv.T
    rho = np.linalg.norm(Hfrak, axis=1)
    theta = np.unwrap(np.arctan2(Hfrak[:, 1], Hfrak[:, 0]))
    Afrak = np.einsum("ij,njk,kl->nil", Pinv, traj.A[idx0:], P)
    alpha = -Afrak[:, 0, 0]
    beta = Afrak[:, 0, 1]
    zeta = Afrak[:, 1, 0]
    hp = np.einsum("nij,nj->ni", Afrak, Hfrak)
    dtheta = (Hfrak[:, 0] * hp[:, 1] - Hfrak[:, 1] * hp[:, 0]) / rho**2
    dlogrho = np.einsum("ni,ni->n", Hfrak, hp) / rho**2

    # rescaled-clock consistency: 3-point nonuniform finite differences of
    # h(s) must match A(s) h(s) on interior nodes
    scale = float(np.max(np.linalg.norm(hp, axis=1)))
    if scale > 0 and s.size >= 3:
        s0, s1, s2 = s[:-2], s[1:-1], s[2:]
        f0, f1, f2 = Hfrak[:-2], Hfrak[1:-1], Hfrak[2:]
        c0 = ((s1 - s2) / ((s0 - s1) * (s0 - s2)))[:, None]
        c1 = ((2 * s1 - s0 - s2) / ((s1 - s0) * (s1 - s2)))[:, None]
        c2 = ((s1 - s0) / ((s2 - s0) * (s2 - s1)))[:, None]
        deriv = c0 * f0 + c1 * f1 + c2 * f2
        residual = float(np.max(np.linalg.norm(deriv - hp[1:-1], axis=1))) / scale
        if residual > consistency_tol:
            raise InvariantViolationError(
                "rescale-consistency",
                f"max |h'(s) - A(s)h(s)| / scale = {residual:.3e} exceeds "
                f"{consistency_tol:g}; record the trajectory more densely",
            )
    else:
        residual = 0.0
    return PhasePath(s, rho, theta, alpha, beta, zeta, case=case,
                     dtheta=dtheta, dlogrho=dlogrho,
                     meta={"t": tt, "P": P, "t_star": float(t_star),
                           "consistency_residual": residual})


# ---------------------------------------------------------------------------
# Dichotomy detection
# ---------------------------------------------------------------------------

@dataclass
class SwitchSequence:
    """Angle marks s_0 < s_1 < ...: theta(s_2n) = pi - eps, theta(s_2n+1) = eps
    (mod 2 pi) with theta' < 0 on each window [s_2n, s_2n+1]."""

    s: np.ndarray
    eps: float

    def windows(self):
        pairs = []
        for k in range(0, len(self.s) - 1, 2):
            pairs.append((float(self.s[k]), float(self.s[k + 1])))
        return pairs


@dataclass
class DichotomyResult:
    kind: str                      # "converges_mod_pi" or "rotates"
    switches: SwitchSequence | None = None
    detail: dict = field(default_factory=dict)


def _hermite_root(s0, s1, f0, f1, d0, d1, level):
    """Root of the cubic Hermite interpolant minus level inside [s0, s1]."""
    h = s1 - s0
    x = (f0 - level) / (f0 - f1) if f0 != f1 else 0.5
    for _ in range(30):
        t = x
        h00 = 2 * t**3 - 3 * t**2 + 1
        h10 = t**3 - 2 * t**2 + t
        h01 = -2 * t**3 + 3 * t**2
        h11 = t**3 - t**2
        val = h00 * f0 + h10 * h * d0 + h01 * f1 + h11 * h * d1 - level
        dh00 = 6 * t**2 - 6 * t
        dh10 = 3 * t**2 - 4 * t + 1
        dh01 = -6 * t**2 + 6 * t
        dh11 = 3 * t**2 - 2 * t
        slope = dh00 * f0 + dh10 * h * d0 + dh01 * f1 + dh11 * h * d1
        if slope == 0:
            break
        step = val / slope
        x = min(max(x - step, 0.0), 1.0)
        if abs(step) < 1e-15:
            break
    return s0 + x * h


def _downcrossings(path, level):
    theta, s = path.theta, path.s
    idx = np.nonzero((theta[:-1] > level) & (theta[1:] <= level))[0]
    out = []
    for k in idx:
        if path.dtheta is not None:
            out.append(_hermite_root(s[k], s[k + 1], theta[k], theta[k + 1],
                                     path.dtheta[k], path.dtheta[k + 1], level))
        else:
            w = (theta[k] - level) / (theta[k] - theta[k + 1])
            out.append(s[k] + w * (s[k + 1] - s[k]))
    return out


def extract_switch_sequence(path, eps):
    """Locate the rotation-regime angle marks on a recorded path."""
    if not 0 < eps < math.pi / 2:
        raise ValueError("eps must lie in (0, pi/2)")
    theta = path.theta
    marks = []
    n_lo = int(math.floor((math.pi - eps - float(np.max(theta))) / (2 * math.pi)))
    n_hi = int(math.ceil((math.pi - eps - float(np.min(theta))) / (2 * math.pi)))
    cursor = float(path.s[0]) - 1.0
    for n in range(n_lo, n_hi + 1):
        upper = math.pi - eps - 2 * math.pi * n
        lower = eps - 2 * math.pi * n
        ups = [v for v in _downcrossings(path, upper) if v > cursor]
        if not ups:
            continue
        su = ups[0]
        downs = [v for v in _downcrossings(path, lower) if v > su]
        if not downs:
            continue
        sl = downs[0]
        inside = (path.s > su) & (path.s < sl)
        th_in = theta[inside]
        if th_in.size and np.any(np.diff(th_in) >= 0):
            continue
        if path.dtheta is not None and inside.any() and np.any(path.dtheta[inside] >= 0):
            continue
        marks.extend([su, sl])
        cursor = sl
    if len(marks) < 2:
        raise PreconditionError("no complete rotation window found on the path")
    return SwitchSequence(s=np.asarray(marks), eps=eps)


def detect_dichotomy(path, eps):
    """Convergence mod pi versus rotation of the unwrapped angle.

    ConvergesModPi when |sin theta| < eps on the trailing 20% of the path;
    Rotates (with the extracted switch sequence) when theta drops by at
    least 2 pi.  Anything else is inconclusive and the caller must extend
    the horizon.
    """
    if not 0 < eps < math.pi / 2:
        raise ValueError("eps must lie in (0, pi/2)")
    if path.span() < 10.0 / eps:
        raise PreconditionError(
            f"path covers s range {path.span():.1f} < 10/eps = {10.0 / eps:.1f}"
        )
    tail = path.s >= path.s[0] + 0.8 * path.span()
    tail_sin = float(np.max(np.abs(np.sin(path.theta[tail]))))
    if tail_sin < eps:
        return DichotomyResult(kind="converges_mod_pi",
                               detail={"tail_max_abs_sin": tail_sin})
    drop = float(np.max(path.theta) - path.theta[-1])
    if drop >= 2 * math.pi:
        seq = extract_switch_sequence(path, eps)
        return DichotomyResult(kind="rotates", switches=seq,
                               detail={"theta_drop": drop})
    raise InconclusiveDichotomyError(
        f"tail |sin theta| = {tail_sin:.3f} >= eps and theta dropped only "
        f"{drop:.2f} rad; extend s_max"
    )


# ---------------------------------------------------------------------------
# Window estimates
# ---------------------------------------------------------------------------

def _interp_state(path, sq):
    """Cubic Hermite values of (rho, theta, dlogrho, dtheta) at sq."""
    k = int(np.searchsorted(path.s, sq, side="right")) - 1
    k = min(max(k, 0), len(path.s) - 2)
    s0, s1 = path.s[k], path.s[k + 1]
    h = s1 - s0
    t = (sq - s0) / h if h > 0 else 0.0
    h00 = 2 * t**3 - 3 * t**2 + 1
    h10 = t**3 - 2 * t**2 + t
    h01 = -2 * t**3 + 3 * t**2
    h11 = t**3 - t**2

    def cubic(v, d):
        return h00 * v[k] + h10 * h * d[k] + h01 * v[k + 1] + h11 * h * d[k + 1]

    logrho = np.log(path.rho)
    if path.dtheta is not None and path.dlogrho is not None:
        theta = cubic(path.theta, path.dtheta)
        lrho = cubic(logrho, path.dlogrho)
        dth = (1 - t) * path.dtheta[k] + t * path.dtheta[k + 1]
        dlr = (1 - t) * path.dlogrho[k] + t * path.dlogrho[k + 1]
    else:
        theta = (1 - t) * path.theta[k] + t * path.theta[k + 1]
        lrho = (1 - t) * logrho[k] + t * logrho[k + 1]
        dth = dlr = 0.0
    return math.exp(lrho), theta, dlr, dth


def _window_integrals(path, sa, sb):
    """Integrals of rho*sin(theta), rho and rho*cos(theta) over [sa, sb].

    Corrected-trapezoid (cubic Hermite) quadrature on the recorded nodes,
    using the recorded derivatives; partial end intervals use interpolated
    states.
    """
    if path.dtheta is None or path.dlogrho is None:
        raise PreconditionError("window quadrature needs recorded derivatives")
    inner = np.nonzero((path.s > sa) & (path.s < sb))[0]
    pts = []
    rho_a, th_a, dlr_a, dth_a = _interp_state(path, sa)
    pts.append((sa, rho_a, th_a, dlr_a, dth_a))
    for k in inner:
        pts.append((path.s[k], path.rho[k], path.theta[k],
                    path.dlogrho[k], path.dtheta[k]))
    rho_b, th_b, dlr_b, dth_b = _interp_state(path, sb)
    pts.append((sb, rho_b, th_b, dlr_b, dth_b))

    totals = np.zeros(3)
    prev = None
    for cur in pts:
        if prev is not None:
            h = cur[0] - prev[0]
            if h > 0:
                for j, (val0, der0, val1, der1) in enumerate(
                        _integrand_pairs(prev, cur)):
                    totals[j] += h * (val0 + val1) / 2 + h * h * (der0 - der1) / 12
        prev = cur
    return totals  # (I_sin, I_rho, I_cos)


def _integrand_pairs(p0, p1):
    out = []
    for which in range(3):
        vals = []
        for (_, rho, th, dlr, dth) in (p0, p1):
            st, ct = math.sin(th), math.cos(th)
            if which == 0:
                vals.append((rho * st, rho * (dlr * st + ct * dth)))
            elif which == 1:
                vals.append((rho, rho * dlr))
            else:
                vals.append((rho * ct, rho * (dlr * ct - st * dth)))
        out.append((vals[0][0], vals[0][1], vals[1][0], vals[1][1]))
    return out


@dataclass
class WindowReport:
    index: int
    s_start: float
    s_end: float
    length: float
    precondition_ok: bool
    basic1_ok: bool
    basic2_ok: bool
    esti1_ok: bool
    esti2_ok: bool
    esti3_ok: bool
    measured: dict

    @property
    def all_ok(self):
        return (self.basic1_ok and self.basic2_ok and self.esti1_ok
                and self.esti2_ok and self.esti3_ok)


@dataclass
class EstimateReport:
    eps: float
    windows: list

    @property
    def all_ok_past_first(self):
        past = self.windows[1:]
        return bool(past) and all(w.precondition_ok and w.all_ok for w in past)


def verify_estimates(path, seq, eps):
    """Check the rotation-window estimates on every window of ``seq``.

    Per window: the smallness precondition M_f + M_g/sin(eps) <= eps^2/4 on
    the tail, the window-length bracket, the pointwise bound on
    rho sin(theta), and the three integral estimates.  Raises if no window
    meets the precondition.
    """
    if not 0 < eps < math.pi / 2:
        raise ValueError("eps must lie in (0, pi/2)")
    suffix_f = np.maximum.accumulate(np.abs(path.f)[::-1])[::-1]
    suffix_g = np.maximum.accumulate(np.abs(path.g)[::-1])[::-1]
    reports = []
    for n, (sa, sb) in enumerate(seq.windows()):
        k0 = int(np.searchsorted(path.s, sa, side="left"))
        k0 = min(k0, len(path.s) - 1)
        Mf = float(suffix_f[k0])
        Mg = float(suffix_g[k0])
        precondition_ok = Mf + Mg / math.sin(eps) <= eps * eps / 4
        length = sb - sa
        lo1 = (2 / eps) * (1 - eps * eps)
        hi1 = (2 / eps) * (1 + eps * eps)
        basic1_ok = lo1 <= length <= hi1
        rho_a, _, _, _ = _interp_state(path, sa)
        inside = (path.s >= sa) & (path.s <= sb)
        prod = path.rho[inside] * np.sin(path.theta[inside])
        lo2 = (1 - eps) * eps * rho_a
        hi2 = (1 + eps) * eps * rho_a
        basic2_ok = bool(prod.size) and bool(
            np.all(prod >= lo2) and np.all(prod <= hi2))
        I_sin, I_rho, I_cos = _window_integrals(path, sa, sb)
        esti1_ok = 2 * (1 - 2 * eps) * rho_a <= I_sin <= 2 * (1 + 2 * eps) * rho_a
        esti2_ok = ((1 - 2 * eps) * rho_a / eps <= I_rho
                    <= (1 + 2 * eps) * rho_a / eps)
        esti3_ok = abs(I_cos) <= rho_a
        reports.append(WindowReport(
            index=n, s_start=sa, s_end=sb, length=length,
            precondition_ok=precondition_ok, basic1_ok=basic1_ok,
            basic2_ok=basic2_ok, esti1_ok=esti1_ok, esti2_ok=esti2_ok,
            esti3_ok=esti3_ok,
            measured={
                "M_f": Mf, "M_g": Mg, "rho_start": rho_a,
                "int_rho_sin": float(I_sin), "int_rho": float(I_rho),
                "int_rho_cos": float(I_cos),
                "sin_ratio": float(I_sin / I_rho) if I_rho else math.inf,
                "cos_ratio": float(abs(I_cos) / I_rho) if I_rho else math.inf,
            },
        ))
    if not any(w.precondition_ok for w in reports):
        raise PreconditionError(
            "no window satisfies the smallness precondition "
            "M_f + M_g/sin(eps) <= eps^2/4"
        )
    return EstimateReport(eps=eps, windows=reports)


# ---------------------------------------------------------------------------
# Hyperbolic asymptotics and the elliptic exclusion monitor
# ---------------------------------------------------------------------------

@dataclass
class HyperbolicAsymptoticsReport:
    a: float
    sup_cross_ratio: float        # sup |x1 x2| / R on the trailing half
    sup_diff_ratio: float         # sup |x1^2 - x2^2 - 2aR| / (2aR)
    tan2theta_end: float
    fit_slope: float
    fit_residual: float

    @property
    def ok(self):
        return self.sup_cross_ratio <= 0.05 and self.sup_diff_ratio <= 0.05


def hyperbolic_asymptotics(path, a=None, *, decay_requirement=1e-6,
                           fit_fraction=0.25, fit_residual_tol=0.01):
    """Check x1 x2 = o(R) and x1^2 - x2^2 ~ 2 a R with R the tail energy.

    The path must decay to the requirement (default |h| below 1e-6 of its
    initial value) and is truncated there: past that point the amplified
    unstable component is pure floating-point noise.  R(s) integrates
    |h|^2 from s to infinity; the part beyond the truncation is estimated
    by fitting an exponential to log|h|^2 on the final quarter, whose
    residual must stay below 1% or the computation refuses.
    """
    if path.rho[-1] > decay_requirement * path.rho[0]:
        raise PreconditionError(
            "path must be recorded until |h| decays below "
            f"{decay_requirement:g} of its initial value"
        )
    cut = int(np.argmax(path.rho <= decay_requirement * path.rho[0])) + 1
    s = path.s[:cut]
    x1, x2 = path.xy()
    x1, x2 = x1[:cut], x2[:cut]
    rho2 = path.rho[:cut] ** 2
    span = float(s[-1] - s[0])
    tail = s >= s[-1] - fit_fraction * span
    if a is None:
        a = float(np.mean(path.alpha[:cut][tail]))
    if a <= 0:
        raise PreconditionError("hyperbolic rate a must be positive")
    st, lt = s[tail], np.log(rho2[tail])
    slope, intercept = np.polyfit(st, lt, 1)
    residual = float(np.max(np.abs(lt - (slope * st + intercept))))
    if residual > fit_residual_tol:
        raise PreconditionError(
            f"exponential tail fit residual {residual:.3e} exceeds "
            f"{fit_residual_tol:g}; cannot control the truncated integral"
        )
    if slope >= 0:
        raise PreconditionError("|h|^2 does not decay; not a stable-cone path")
    tail_mass = rho2[-1] / (-slope)
    ds = np.diff(s)
    seg = 0.5 * (rho2[:-1] + rho2[1:]) * ds
    R = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]]) + tail_mass
    half = s >= s[0] + 0.5 * span
    cross = np.abs(x1 * x2)[half] / R[half]
    diff = np.abs(x1**2 - x2**2 - 2 * a * R)[half] / (2 * a * R[half])
    denom = x1[-1] ** 2 - x2[-1] ** 2
    tan2 = 2 * x1[-1] * x2[-1] / denom if denom != 0 else math.inf
    return HyperbolicAsymptoticsReport(
        a=a, sup_cross_ratio=float(np.max(cross)),
        sup_diff_ratio=float(np.max(diff)), tan2theta_end=float(tan2),
        fit_slope=float(slope), fit_residual=residual,
    )


@dataclass
class EllipticMonitorReport:
    M: float
    a: float
    nondecreasing_ok: bool
    min_log_increment: float
    rho_min: float
    lower_bound_ok: bool

    @property
    def ok(self):
        return self.nondecreasing_ok and self.lower_bound_ok


def excluded_elliptic_monitor(path, M, *, a=None, tol=1e-6):
    """Verify that e^{Ms} rho^2 w is nondecreasing on an elliptic-case path.

    w = alpha sin 2theta + mu cos 2theta + eta must stay inside (a/2, 2a);
    monotonicity of the monitored quantity forces rho away from zero, which
    is the numerical witness that a positive determinant at a zero of h is
    impossible.
    """
    if path.case != "elliptic":
        raise PreconditionError("monitor requires the elliptic-case parametrization")
    mu = path.mu
    eta = path.eta
    w = (path.alpha * np.sin(2 * path.theta) + mu * np.cos(2 * path.theta) + eta)
    if a is None:
        a = float(eta[-1])
    if a <= 0:
        raise PreconditionError("elliptic rate a must be positive")
    if np.any(w <= a / 2) or np.any(w >= 2 * a):
        raise InvariantViolationError(
            "elliptic-w-bracket",
            f"w left the interval (a/2, 2a) = ({a / 2:g}, {2 * a:g})",
        )
    logm = M * path.s + 2 * np.log(path.rho) + np.log(w)
    inc = np.diff(logm)
    min_inc = float(np.min(inc)) if inc.size else 0.0
    nondecreasing_ok = bool(min_inc >= -tol)
    bound = np.sqrt(np.exp(logm[0] - M * path.s) / w)
    lower_bound_ok = bool(np.all(path.rho >= bound * (1 - 1e-9)))
    return EllipticMonitorReport(
        M=M, a=a, nondecreasing_ok=nondecreasing_ok,
        min_log_increment=min_inc, rho_min=float(np.min(path.rho)),
        lower_bound_ok=lower_bound_ok,
    )
