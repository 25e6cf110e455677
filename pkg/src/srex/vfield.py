"""Polynomial vector fields on R^n with exact Lie bracket calculus.

A :class:`PolyVecField` holds one :class:`~srex.poly.Poly` per coordinate
direction, all in the same n variables.  Brackets are computed exactly as
[X, Y] = DY.X - DX.Y on the polynomial coefficients, so antisymmetry and the
Jacobi identity hold syntactically, not just numerically.  Evaluation at
floating-point points goes through a compiled exponent/coefficient table.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError
from .poly import Poly, format_poly, parse_poly


class PolyVecField:
    """Vector field on R^n whose components are exact rational polynomials."""

    __slots__ = ("dim", "components", "_eval_tab", "_jac_tab")

    def __init__(self, components):
        components = tuple(components)
        if not components:
            raise ValueError("vector field needs at least one component")
        dim = len(components)
        for comp in components:
            if not isinstance(comp, Poly):
                raise TypeError("components must be Poly instances")
            if comp.nvars != dim:
                raise DimensionMismatchError(
                    f"component in {comp.nvars} variables on R^{dim}"
                )
        self.dim = dim
        self.components = components
        self._eval_tab = None
        self._jac_tab = None

    # pickling drops the compiled tables; they are rebuilt lazily
    def __getstate__(self):
        return (self.dim, self.components)

    def __setstate__(self, state):
        self.dim, self.components = state
        self._eval_tab = None
        self._jac_tab = None

    @classmethod
    def from_literals(cls, literals):
        n = len(literals)
        return cls([parse_poly(text, n) for text in literals])

    @classmethod
    def zero(cls, dim):
        return cls([Poly.zero(dim)] * dim)

    @classmethod
    def coordinate(cls, dim, index):
        """The constant field d/dz_{index+1}."""
        comps = [Poly.zero(dim)] * dim
        comps[index] = Poly.const(dim, 1)
        return cls(comps)

    def is_zero(self):
        return all(c.is_zero() for c in self.components)

    def __eq__(self, other):
        if not isinstance(other, PolyVecField):
            return NotImplemented
        return self.dim == other.dim and self.components == other.components

    def __hash__(self):
        return hash((self.dim, self.components))

    def __add__(self, other):
        if self.dim != other.dim:
            raise DimensionMismatchError("field dimensions differ")
        return PolyVecField([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other):
        if self.dim != other.dim:
            raise DimensionMismatchError("field dimensions differ")
        return PolyVecField([a - b for a, b in zip(self.components, other.components)])

    def __neg__(self):
        return PolyVecField([-c for c in self.components])

    def scale(self, factor):
        """Multiply every component by an exact rational factor."""
        return PolyVecField([c * factor for c in self.components])

    def __repr__(self):
        body = ", ".join(format_poly(c) for c in self.components)
        return f"PolyVecField[{body}]"

    # -- fast evaluation ------------------------------------------------------

    def _compile_eval(self):
        rows, exps, coeffs = [], [], []
        for k, comp in enumerate(self.components):
            for expo, coeff in comp.items_sorted():
                rows.append(k)
                exps.append(expo)
                coeffs.append(float(coeff))
        if rows:
            tab = (
                np.asarray(rows, dtype=np.intp),
                np.asarray(exps, dtype=np.int64),
                np.asarray(coeffs, dtype=float),
            )
        else:
            tab = (np.zeros(0, dtype=np.intp), np.zeros((0, self.dim), dtype=np.int64),
                   np.zeros(0, dtype=float))
        self._eval_tab = tab
        return tab

    def __call__(self, point):
        """Evaluate componentwise at a float vector."""
        point = np.asarray(point, dtype=float)
        if point.shape != (self.dim,):
            raise DimensionMismatchError(
                f"point of shape {point.shape} for a field on R^{self.dim}"
            )
        tab = self._eval_tab or self._compile_eval()
        rows, exps, coeffs = tab
        out = np.zeros(self.dim)
        if rows.size:
            vals = coeffs * np.prod(point[None, :] ** exps, axis=1)
            np.add.at(out, rows, vals)
        return out

    def jacobian(self, point):
        """The n x n matrix d(X_j)/d(z_k) evaluated at a float vector."""
        point = np.asarray(point, dtype=float)
        if point.shape != (self.dim,):
            raise DimensionMismatchError(
                f"point of shape {point.shape} for a field on R^{self.dim}"
            )
        if self._jac_tab is None:
            rows, exps, coeffs = [], [], []
            for j, comp in enumerate(self.components):
                for k in range(self.dim):
                    d = comp.diff(k)
                    for expo, coeff in d.items_sorted():
                        rows.append(j * self.dim + k)
                        exps.append(expo)
                        coeffs.append(float(coeff))
            if rows:
                self._jac_tab = (
                    np.asarray(rows, dtype=np.intp),
                    np.asarray(exps, dtype=np.int64),
                    np.asarray(coeffs, dtype=float),
                )
            else:
                self._jac_tab = (np.zeros(0, dtype=np.intp),
                                 np.zeros((0, self.dim), dtype=np.int64),
                                 np.zeros(0, dtype=float))
        rows, exps, coeffs = self._jac_tab
        out = np.zeros(self.dim * self.dim)
        if rows.size:
            vals = coeffs * np.prod(point[None, :] ** exps, axis=1)
            np.add.at(out, rows, vals)
        return out.reshape(self.dim, self.dim)

    def evaluate_exact(self, point):
        """Exact evaluation at a rational point (list of int/Fraction)."""
        return [comp(point) for comp in self.components]


class BracketWord:
    """A word (i_1, ..., i_k) over frame letters 1..m.

    Denotes the right-nested bracket [X_{i_1}, [..., [X_{i_{k-1}}, X_{i_k}]]];
    a length-1 word is the frame field itself.
    """

    __slots__ = ("letters",)

    def __init__(self, letters):
        letters = tuple(int(i) for i in letters)
        if not letters:
            raise ValueError("bracket word must be nonempty")
        if any(i < 1 for i in letters):
            raise ValueError("bracket word letters are 1-based frame indices")
        self.letters = letters

    def __len__(self):
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def __eq__(self, other):
        if isinstance(other, BracketWord):
            return self.letters == other.letters
        return NotImplemented

    def __hash__(self):
        return hash(self.letters)

    def __repr__(self):
        return f"BracketWord({''.join(map(str, self.letters))})"


def lie_bracket(X, Y):
    """Exact Lie bracket [X, Y] = DY.X - DX.Y of polynomial fields."""
    if X.dim != Y.dim:
        raise DimensionMismatchError(f"bracket of fields on R^{X.dim} and R^{Y.dim}")
    n = X.dim
    comps = []
    for k in range(n):
        acc = Poly.zero(n)
        yk = Y.components[k]
        xk = X.components[k]
        for j in range(n):
            xj = X.components[j]
            if not xj.is_zero():
                d = yk.diff(j)
                if not d.is_zero():
                    acc = acc + xj * d
            yj = Y.components[j]
            if not yj.is_zero():
                d = xk.diff(j)
                if not d.is_zero():
                    acc = acc - yj * d
        comps.append(acc)
    return PolyVecField(comps)


def bracket_of_word(frame, word):
    """Right-nested bracket of frame fields along a :class:`BracketWord`."""
    if not isinstance(word, BracketWord):
        word = BracketWord(word)
    m = len(frame)
    for letter in word:
        if letter > m:
            raise ValueError(f"word letter {letter} out of range for a frame of {m} fields")
    letters = word.letters
    field = frame[letters[-1] - 1]
    for letter in reversed(letters[:-1]):
        field = lie_bracket(frame[letter - 1], field)
    return field


def evaluate(X, point):
    """Componentwise polynomial evaluation of a field at a float point."""
    return X(point)
