"""Sparse multivariate polynomials with exact rational coefficients.

Polynomials in variables z1..zn are stored as a dictionary mapping exponent
multi-indices (tuples of non-negative ints) to nonzero ``Fraction``
coefficients.  All arithmetic is exact; floating point never enters a
coefficient, so zero-testing and equality are syntactic on the canonical
form.
"""

from __future__ import annotations

import re
from fractions import Fraction


def _as_fraction(value):
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(
        f"polynomial coefficients must be exact rationals, got {type(value).__name__}"
    )


class Poly:
    """A multivariate polynomial over Q in ``nvars`` variables."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars, terms=None):
        if nvars < 1:
            raise ValueError("nvars must be positive")
        self.nvars = int(nvars)
        clean = {}
        if terms:
            for expo, coeff in terms.items():
                expo = tuple(int(e) for e in expo)
                if len(expo) != nvars or any(e < 0 for e in expo):
                    raise ValueError(f"bad exponent multi-index {expo}")
                coeff = _as_fraction(coeff)
                if coeff != 0:
                    clean[expo] = clean.get(expo, Fraction(0)) + coeff
                    if clean[expo] == 0:
                        del clean[expo]
        self.terms = clean

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, nvars):
        return cls(nvars)

    @classmethod
    def const(cls, nvars, value):
        value = _as_fraction(value)
        if value == 0:
            return cls(nvars)
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def variable(cls, nvars, index):
        """The coordinate polynomial z_{index+1} (0-based index)."""
        if not 0 <= index < nvars:
            raise ValueError(f"variable index {index} out of range for nvars={nvars}")
        expo = tuple(1 if k == index else 0 for k in range(nvars))
        return cls(nvars, {expo: Fraction(1)})

    @classmethod
    def monomial(cls, nvars, expo, coeff=1):
        return cls(nvars, {tuple(expo): _as_fraction(coeff)})

    # -- predicates --------------------------------------------------------

    def is_zero(self):
        return not self.terms

    def degree(self):
        """Total degree; -1 for the zero polynomial."""
        if not self.terms:
            return -1
        return max(sum(e) for e in self.terms)

    def __eq__(self, other):
        if not isinstance(other, Poly):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    # -- arithmetic ---------------------------------------------------------

    def _check(self, other):
        if self.nvars != other.nvars:
            raise ValueError("polynomials in different variable counts")

    def __add__(self, other):
        if not isinstance(other, Poly):
            other = Poly.const(self.nvars, other)
        self._check(other)
        terms = dict(self.terms)
        for expo, coeff in other.terms.items():
            acc = terms.get(expo, Fraction(0)) + coeff
            if acc == 0:
                terms.pop(expo, None)
            else:
                terms[expo] = acc
        out = Poly.__new__(Poly)
        out.nvars = self.nvars
        out.terms = terms
        return out

    def __radd__(self, other):
        return self.__add__(other)

    def __neg__(self):
        out = Poly.__new__(Poly)
        out.nvars = self.nvars
        out.terms = {expo: -coeff for expo, coeff in self.terms.items()}
        return out

    def __sub__(self, other):
        if not isinstance(other, Poly):
            other = Poly.const(self.nvars, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Poly):
            coeff = _as_fraction(other)
            if coeff == 0:
                return Poly.zero(self.nvars)
            out = Poly.__new__(Poly)
            out.nvars = self.nvars
            out.terms = {expo: c * coeff for expo, c in self.terms.items()}
            return out
        self._check(other)
        terms = {}
        for ea, ca in self.terms.items():
            for eb, cb in other.terms.items():
                expo = tuple(x + y for x, y in zip(ea, eb))
                acc = terms.get(expo, Fraction(0)) + ca * cb
                if acc == 0:
                    terms.pop(expo, None)
                else:
                    terms[expo] = acc
        out = Poly.__new__(Poly)
        out.nvars = self.nvars
        out.terms = terms
        return out

    def __rmul__(self, other):
        return self.__mul__(other)

    def __pow__(self, power):
        if not isinstance(power, int) or power < 0:
            raise ValueError("only non-negative integer powers")
        result = Poly.const(self.nvars, 1)
        base = self
        while power:
            if power & 1:
                result = result * base
            base = base * base
            power >>= 1
        return result

    # -- calculus ------------------------------------------------------------

    def diff(self, index):
        """Exact partial derivative with respect to z_{index+1}."""
        terms = {}
        for expo, coeff in self.terms.items():
            e = expo[index]
            if e == 0:
                continue
            new = list(expo)
            new[index] = e - 1
            terms[tuple(new)] = coeff * e
        return Poly(self.nvars, terms)

    # -- evaluation ------------------------------------------------------------

    def __call__(self, point):
        """Evaluate at ``point``.

        Exact when all coordinates are ints or Fractions; floating point
        otherwise.
        """
        if len(point) != self.nvars:
            raise ValueError("point dimension mismatch")
        exact = all(isinstance(v, (int, Fraction)) for v in point)
        total = Fraction(0) if exact else 0.0
        for expo, coeff in self.terms.items():
            value = coeff if exact else float(coeff)
            for v, e in zip(point, expo):
                if e:
                    value = value * v**e
            total += value
        return total

    # -- presentation -----------------------------------------------------------

    def items_sorted(self):
        """Terms in a deterministic order (lexicographic on exponents)."""
        return sorted(self.terms.items())

    def __repr__(self):
        return f"Poly({self.nvars}, {format_poly(self)!r})"

    def __str__(self):
        return format_poly(self)


# ---------------------------------------------------------------------------
# Polynomial literal syntax: sums of terms  c * z1^a1 * ... * zn^an
# with rational c written as p/q.  Coefficient or variables may be omitted
# in a term ("z1", "3", "-z2^2").
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(?P<sign>[+-])|(?P<star>\*)|(?P<var>z\d+)(?:\^(?P<pow>\d+))?"
                    r"|(?P<rat>\d+(?:/\d+)?))")


def parse_poly(text, nvars):
    """Parse a polynomial literal into a :class:`Poly`."""
    text = text.strip()
    if not text:
        raise ValueError("empty polynomial literal")
    pos = 0
    total = Poly.zero(nvars)
    length = len(text)

    def next_token():
        nonlocal pos
        if pos >= length:
            return None, None
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ValueError(f"cannot parse polynomial literal near {text[pos:pos + 12]!r}")
        pos = m.end()
        for kind in ("sign", "star", "var", "rat"):
            if m.group(kind):
                return kind, m
        raise ValueError(f"cannot parse polynomial literal near {text[pos:pos + 12]!r}")

    sign = 1
    pending_sign = True  # leading sign allowed
    coeff = None
    expo = None

    def flush():
        nonlocal total, coeff, expo, sign
        if coeff is None and expo is None:
            raise ValueError("dangling operator in polynomial literal")
        c = Fraction(1) if coeff is None else coeff
        e = (0,) * nvars if expo is None else tuple(expo)
        total = total + Poly.monomial(nvars, e, sign * c)
        coeff, expo, sign = None, None, 1

    while True:
        kind, m = next_token()
        if kind is None:
            flush()
            break
        if kind == "sign":
            if pending_sign and coeff is None and expo is None:
                sign = -sign if m.group("sign") == "-" else sign
                pending_sign = False
                continue
            flush()
            sign = -1 if m.group("sign") == "-" else 1
            pending_sign = False
        elif kind == "star":
            if coeff is None and expo is None:
                raise ValueError("'*' without preceding factor")
        elif kind == "rat":
            value = Fraction(m.group("rat"))
            coeff = value if coeff is None else coeff * value
        elif kind == "var":
            index = int(m.group("var")[1:]) - 1
            if not 0 <= index < nvars:
                raise ValueError(f"variable {m.group('var')} out of range (nvars={nvars})")
            power = int(m.group("pow") or 1)
            if expo is None:
                expo = [0] * nvars
            expo[index] += power
    s = text.replace(" ", "")
    if s in ("", "+", "-"):
        raise ValueError("empty polynomial literal")
    return total


def format_poly(poly):
    """Render a :class:`Poly` in the literal syntax (canonical ordering)."""
    if poly.is_zero():
        return "0"
    parts = []
    for expo, coeff in poly.items_sorted():
        factors = []
        if abs(coeff) != 1 or not any(expo):
            factors.append(str(abs(coeff)))
        for k, e in enumerate(expo):
            if e == 1:
                factors.append(f"z{k + 1}")
            elif e > 1:
                factors.append(f"z{k + 1}^{e}")
        term = " * ".join(factors)
        if not parts:
            parts.append(term if coeff > 0 else f"-{term}")
        else:
            parts.append(f"+ {term}" if coeff > 0 else f"- {term}")
    return " ".join(parts)
