"""Sub-Riemannian structures: frames, flags, dilations, nilpotentization.

A structure is given by an explicit generating frame of polynomial vector
fields, optionally with grading weights when the chart is privileged at the
origin.  The flag D^1 subset D^2 subset ... is computed pointwise from
right-nested brackets; on points with exact rational coordinates the rank
decisions are exact.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np

from .errors import DimensionMismatchError, PreconditionError
from .poly import Poly
from .vfield import BracketWord, PolyVecField, bracket_of_word


class SRStructure:
    """Dimension, generating frame, optional grading weights."""

    __slots__ = ("dim", "frame", "weights", "name")

    def __init__(self, frame, weights=None, name=None):
        frame = tuple(frame)
        if len(frame) < 2:
            raise ValueError("a generating frame needs at least two fields")
        dim = frame[0].dim
        for field in frame:
            if field.dim != dim:
                raise DimensionMismatchError("frame fields on different spaces")
        if weights is not None:
            weights = tuple(int(w) for w in weights)
            if len(weights) != dim:
                raise ValueError("one weight per coordinate required")
            if weights[0] != 1:
                raise ValueError("w_1 must equal 1")
            if any(a > b for a, b in zip(weights, weights[1:])):
                raise ValueError("weights must be nondecreasing")
            if any(w < 1 for w in weights):
                raise ValueError("weights must be positive")
        self.dim = dim
        self.frame = frame
        self.weights = weights
        self.name = name

    @property
    def rank(self):
        return len(self.frame)

    def __eq__(self, other):
        if not isinstance(other, SRStructure):
            return NotImplemented
        return (self.dim == other.dim and self.frame == other.frame
                and self.weights == other.weights)

    def __hash__(self):
        return hash((self.dim, self.frame, self.weights))

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"SRStructure{tag}(dim={self.dim}, rank={self.rank}, weights={self.weights})"


class Dilation:
    """Anisotropic dilation delta_nu(z) = (nu^{w_1} z_1, ..., nu^{w_n} z_n)."""

    __slots__ = ("weights", "factor")

    def __init__(self, weights, factor):
        self.weights = tuple(int(w) for w in weights)
        self.factor = float(factor)

    def __call__(self, z):
        return dilate(self, z)


def dilate(d, z):
    z = np.asarray(z, dtype=float)
    if z.shape != (len(d.weights),):
        raise DimensionMismatchError("dilation weights and point length differ")
    return z * np.power(d.factor, np.asarray(d.weights, dtype=float))


class ControlSignal:
    """Sampled control u(t_k) on a time grid, optionally arclength-normalized."""

    __slots__ = ("times", "samples", "arclength")

    def __init__(self, times, samples, arclength=True):
        times = np.asarray(times, dtype=float)
        samples = np.asarray(samples, dtype=float)
        if times.ndim != 1 or len(times) < 1:
            raise ValueError("need a nonempty 1-d time grid")
        if np.any(np.diff(times) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if samples.shape[0] != times.shape[0]:
            raise ValueError("one control sample per grid node required")
        if samples.ndim == 1:
            samples = samples[:, None]
        if arclength:
            norms = np.linalg.norm(samples, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-9):
                worst = float(np.max(np.abs(norms - 1.0)))
                raise ValueError(f"|u(t_k)| = 1 violated by {worst:.3e}")
        self.times = times
        self.samples = samples
        self.arclength = arclength

    def value_at(self, t):
        """Piecewise-constant (left sample) value at time t."""
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        idx = min(max(idx, 0), len(self.times) - 1)
        return self.samples[idx]


def blowup_control(u, a, b):
    """Affine reparametrization of u from [a, b] onto [0, 1].

    Keeps the original samples at grid nodes inside [a, b]; the endpoints are
    inserted with their piecewise-constant values, so the sample range on the
    grid is preserved exactly.
    """
    if not a < b:
        raise PreconditionError("blow-up interval is empty")
    if a < u.times[0] - 1e-12 or b > u.times[-1] + 1e-12:
        raise PreconditionError("blow-up interval outside the recorded signal")
    inner = (u.times > a + 1e-15) & (u.times < b - 1e-15)
    times = np.concatenate(([a], u.times[inner], [b]))
    samples = np.vstack([u.value_at(a), u.samples[inner], u.value_at(b)])
    tau = (times - a) / (b - a)
    tau[0], tau[-1] = 0.0, 1.0
    return ControlSignal(tau, samples, arclength=u.arclength)


# ---------------------------------------------------------------------------
# Flags
# ---------------------------------------------------------------------------

def _exact_rank(rows):
    """Rank of a list of Fraction-vectors by exact Gaussian elimination."""
    mat = [list(r) for r in rows]
    rank = 0
    cols = len(mat[0]) if mat else 0
    row = 0
    for col in range(cols):
        pivot = None
        for r in range(row, len(mat)):
            if mat[r][col] != 0:
                pivot = r
                break
        if pivot is None:
            continue
        mat[row], mat[pivot] = mat[pivot], mat[row]
        pv = mat[row][col]
        for r in range(row + 1, len(mat)):
            if mat[r][col] != 0:
                factor = mat[r][col] / pv
                mat[r] = [x - factor * y for x, y in zip(mat[r], mat[row])]
        row += 1
        rank += 1
        if row == len(mat):
            break
    return rank


def _float_rank(rows, rel_tol=1e-10):
    mat = np.asarray(rows, dtype=float)
    if mat.size == 0:
        return 0
    sigma = np.linalg.svd(mat, compute_uv=False)
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    return int(np.sum(sigma > rel_tol * sigma[0]))


def flag_dimensions(S, point, max_step):
    """Dimensions of D^1 subset D^2 subset ... subset D^max_step at a point.

    dims[i] is the rank of the span of all right-nested brackets of word
    length <= i+1 evaluated at the point.  Points with int/Fraction
    coordinates get exact rank decisions; float points use an SVD with
    relative threshold 1e-10.
    """
    if max_step < 1:
        raise ValueError("max_step must be >= 1")
    if len(point) != S.dim:
        raise DimensionMismatchError("point dimension mismatch")
    exact = all(isinstance(v, (int, Fraction)) for v in point)
    m = S.rank
    dims = []
    rows = []
    for length in range(1, max_step + 1):
        for letters in itertools.product(range(1, m + 1), repeat=length):
            field = bracket_of_word(S.frame, BracketWord(letters))
            if exact:
                rows.append([Fraction(v) for v in field.evaluate_exact(list(point))])
            else:
                rows.append(field(np.asarray(point, dtype=float)))
        dims.append(_exact_rank(rows) if exact else _float_rank(rows))
    return dims


# ---------------------------------------------------------------------------
# Graded rescaling and nilpotent approximation
# ---------------------------------------------------------------------------

def _monomial_rescale_exponent(weights, comp_index, expo):
    # exponent of nu for monomial z^a in component i of nu (delta_{1/nu})_* X
    return 1 - weights[comp_index] + sum(a * w for a, w in zip(expo, weights))


def pushforward_rescaled(S, nu):
    """The frame nu * (delta_{1/nu})_* X_i, computed exactly per monomial.

    Monomial z^a in component i picks up the factor
    nu^(1 - w_i + sum_j a_j w_j).
    """
    if S.weights is None:
        raise PreconditionError("grading weights required for rescaling")
    nu = Fraction(nu)
    if nu <= 0:
        raise ValueError("rescaling factor must be positive")
    fields = []
    for X in S.frame:
        comps = []
        for i, comp in enumerate(X.components):
            terms = {}
            for expo, coeff in comp.terms.items():
                k = _monomial_rescale_exponent(S.weights, i, expo)
                terms[expo] = coeff * nu**k
            comps.append(Poly(S.dim, terms))
        fields.append(PolyVecField(comps))
    return SRStructure(fields, weights=S.weights, name=S.name)


def nilpotent_approximation(S):
    """Keep only the weighted-degree -1 part of each frame field.

    In component i this retains exactly the monomials z^a with
    sum_j a_j w_j = w_i - 1.  Raises if the truncated frame fails to
    bracket-generate at the origin, which signals non-privileged coordinates.
    """
    if S.weights is None:
        raise PreconditionError("grading weights required for nilpotentization")
    fields = []
    for X in S.frame:
        comps = []
        for i, comp in enumerate(X.components):
            terms = {}
            for expo, coeff in comp.terms.items():
                wdeg = sum(a * w for a, w in zip(expo, S.weights))
                if wdeg == S.weights[i] - 1:
                    terms[expo] = coeff
            comps.append(Poly(S.dim, terms))
        fields.append(PolyVecField(comps))
    approx = SRStructure(fields, weights=S.weights,
                         name=f"{S.name}-nilpotent" if S.name else None)
    origin = [0] * S.dim
    dims = flag_dimensions(approx, origin, max(S.weights))
    if dims[-1] != S.dim:
        raise PreconditionError(
            "truncated frame is not bracket-generating at the origin; "
            "the supplied coordinates are not privileged"
        )
    return approx


# ---------------------------------------------------------------------------
# Free nilpotent frames of rank 2, step <= 4
# ---------------------------------------------------------------------------

# Hall basis on two generators up to step 4, 0-based indices:
#   0: X1   1: X2   2: X12   3: X112   4: X212   5: X1112   6: X2112   7: X2212
_FN_WEIGHTS = (1, 1, 2, 3, 3, 4, 4, 4)

# nonzero brackets [E_i, E_j] for i < j in the free step-4 algebra;
# each value maps target index -> coefficient
_FN_BRACKETS = {
    (0, 1): {2: 1},
    (0, 2): {3: 1},
    (1, 2): {4: 1},
    (0, 3): {5: 1},
    (1, 3): {6: 1},
    (0, 4): {6: 1},   # [X1, X212] = X2112 by the Jacobi identity
    (1, 4): {7: 1},
}

_FN_DIMS = {2: 3, 3: 5, 4: 8}


def _fn_bracket(i, j, n):
    """Structure constants [E_i, E_j] truncated to the first n basis elements."""
    if i == j:
        return {}
    sign = 1
    if i > j:
        i, j, sign = j, i, -1
    out = {}
    for target, coeff in _FN_BRACKETS.get((i, j), {}).items():
        if target < n:
            out[target] = sign * coeff
    return out


def _fn_ad_z(vec, n):
    """Apply ad_z = sum_a z_a [E_a, .] to a vector of coefficient polynomials."""
    out = [Poly.zero(n) for _ in range(n)]
    for b in range(n):
        comp = vec[b]
        if comp.is_zero():
            continue
        for a in range(n):
            for target, coeff in _fn_bracket(a, b, n).items():
                out[target] = out[target] + Poly.variable(n, a) * comp * coeff
    return out


def _fn_invariant_field(seed_index, n):
    # X_u(z) = u + (1/2) ad_z u + (1/12) ad_z^2 u; the cubic coefficient of
    # the BCH derivative series vanishes, so this is exact up to step 4.
    vec = [Poly.zero(n) for _ in range(n)]
    vec[seed_index] = Poly.const(n, 1)
    ad1 = _fn_ad_z(vec, n)
    ad2 = _fn_ad_z(ad1, n)
    comps = [vec[k] + ad1[k] * Fraction(1, 2) + ad2[k] * Fraction(1, 12)
             for k in range(n)]
    return PolyVecField(comps)


def free_nilpotent_frame(step):
    """Free nilpotent rank-2 structure of the given step in {2, 3, 4}.

    Polynomial realization of the left-invariant generators in exponential
    coordinates, graded with weights (1, 1, 2, 3, 3, 4, 4, 4) truncated to
    the step.  All brackets of word length step+1 vanish exactly and the
    realized brackets satisfy the Hall structure constants.
    """
    if step not in _FN_DIMS:
        raise ValueError(f"unsupported step {step}; expected 2, 3 or 4")
    n = _FN_DIMS[step]
    X1 = _fn_invariant_field(0, n)
    X2 = _fn_invariant_field(1, n)
    return SRStructure([X1, X2], weights=_FN_WEIGHTS[:n],
                       name=f"free-nilpotent-{step}")


def free_nilpotent_basis_field(index, step):
    """Left-invariant realization of Hall basis element ``index`` (0-based)."""
    if step not in _FN_DIMS:
        raise ValueError(f"unsupported step {step}; expected 2, 3 or 4")
    n = _FN_DIMS[step]
    if not 0 <= index < n:
        raise ValueError("basis index out of range")
    return _fn_invariant_field(index, n)


def fn_structure_bracket(i, j, step):
    """Structure constants [E_i, E_j] of the truncated Hall algebra."""
    return _fn_bracket(i, j, _FN_DIMS[step])


# ---------------------------------------------------------------------------
# Worked structures
# ---------------------------------------------------------------------------

def heisenberg():
    """X1 = d/dx - (y/2) d/dz, X2 = d/dy + (x/2) d/dz on R^3."""
    X1 = PolyVecField.from_literals(["1", "0", "-1/2 * z2"])
    X2 = PolyVecField.from_literals(["0", "1", "1/2 * z1"])
    return SRStructure([X1, X2], weights=(1, 1, 2), name="heisenberg")


def martinet():
    """X1 = d/dx, X2 = d/dy + (x^2/2) d/dz on R^3."""
    X1 = PolyVecField.from_literals(["1", "0", "0"])
    X2 = PolyVecField.from_literals(["0", "1", "1/2 * z1^2"])
    return SRStructure([X1, X2], weights=(1, 1, 3), name="martinet")


def engel():
    """X1 = d/dx, X2 = d/dy + x d/dz + (x^2/2) d/dw on R^4."""
    X1 = PolyVecField.from_literals(["1", "0", "0", "0"])
    X2 = PolyVecField.from_literals(["0", "1", "z1", "1/2 * z1^2"])
    return SRStructure([X1, X2], weights=(1, 1, 2, 3), name="engel")
