"""Independent numerical oracles for the test suite.

Everything here avoids the package's exact polynomial calculus on purpose:
Jacobians come from central finite differences and flows from a plain RK4
loop, so agreement with the symbolic routes is meaningful evidence.
"""

import numpy as np
from fractions import Fraction

from srex.poly import Poly
from srex.vfield import PolyVecField


def numeric_jacobian(field, point, step=1e-6):
    point = np.asarray(point, dtype=float)
    n = point.size
    J = np.zeros((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        J[:, k] = (field(point + e) - field(point - e)) / (2 * step)
    return J


def bracket_fd(X, Y, point):
    """[X, Y](point) by finite-difference Jacobians: DY.X - DX.Y."""
    point = np.asarray(point, dtype=float)
    return numeric_jacobian(Y, point) @ X(point) - numeric_jacobian(X, point) @ Y(point)


def rk4_flow(field, point, time, substeps=64):
    """Flow of a vector field by classical RK4 with fixed substeps."""
    y = np.asarray(point, dtype=float).copy()
    h = time / substeps
    for _ in range(substeps):
        k1 = field(y)
        k2 = field(y + 0.5 * h * k1)
        k3 = field(y + 0.5 * h * k2)
        k4 = field(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def flow_commutator(X, Y, point, t, substeps=64):
    """(Phi^Y_-s Phi^X_-s Phi^Y_s Phi^X_s (q) - q)/t with s = sqrt(t)."""
    s = np.sqrt(t)
    q = np.asarray(point, dtype=float)
    y = rk4_flow(X, q, s, substeps)
    y = rk4_flow(Y, y, s, substeps)
    y = rk4_flow(X, y, -s, substeps)
    y = rk4_flow(Y, y, -s, substeps)
    return (y - q) / t


def flow_commutator_richardson(X, Y, point, t, substeps=64):
    """Two-scale extrapolation of the flow commutator.

    The single-scale map has an O(sqrt(t)) relative bias from second-order
    brackets; combining scales t and t/4 cancels it, leaving O(t).
    """
    d1 = flow_commutator(X, Y, point, t, substeps)
    d2 = flow_commutator(X, Y, point, t / 4.0, substeps)
    return 2.0 * d2 - d1


def random_poly(rng, nvars, max_degree=3, terms=4):
    """Random sparse polynomial with small rational coefficients."""
    data = {}
    for _ in range(terms):
        expo = tuple(int(e) for e in rng.integers(0, max_degree + 1, nvars))
        while sum(expo) > max_degree:
            expo = tuple(int(e) for e in rng.integers(0, max_degree + 1, nvars))
        num = int(rng.integers(-3, 4))
        den = int(rng.integers(1, 4))
        if num:
            data[expo] = data.get(expo, Fraction(0)) + Fraction(num, den)
    return Poly(nvars, {k: v for k, v in data.items() if v != 0})


def random_field(rng, dim, max_degree=3, terms=3):
    return PolyVecField([random_poly(rng, dim, max_degree, terms)
                         for _ in range(dim)])
