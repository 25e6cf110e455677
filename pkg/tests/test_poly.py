from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from srex.poly import Poly, format_poly, parse_poly


def test_zero_and_const():
    z = Poly.zero(3)
    assert z.is_zero()
    assert z.degree() == -1
    c = Poly.const(3, Fraction(2, 3))
    assert c((1, 1, 1)) == Fraction(2, 3)


def test_rejects_float_coefficients():
    with pytest.raises(TypeError):
        Poly(2, {(1, 0): 0.5})


def test_arithmetic_exact():
    x = Poly.variable(2, 0)
    y = Poly.variable(2, 1)
    p = (x + y) * (x - y)
    q = x * x - y * y
    assert p == q
    assert (p - q).is_zero()


def test_pow_and_diff():
    x = Poly.variable(1, 0)
    p = (x + 1) ** 3
    assert p((Fraction(1),)) == 8
    dp = p.diff(0)
    assert dp((Fraction(1),)) == 12
    assert dp == 3 * (x + 1) ** 2


def test_eval_exact_vs_float():
    x = Poly.variable(2, 0)
    y = Poly.variable(2, 1)
    p = Fraction(1, 3) * x * y + y ** 2
    exact = p((Fraction(1, 2), Fraction(3)))
    assert exact == Fraction(1, 2) + 9
    assert p((0.5, 3.0)) == pytest.approx(float(exact))


@pytest.mark.parametrize("text,point,value", [
    ("0", (1, 1), Fraction(0)),
    ("1", (5, 5), Fraction(1)),
    ("-1/2 * z2", (0, 4), Fraction(-2)),
    ("1/2 * z1^2", (3, 0), Fraction(9, 2)),
    ("z1 + z1^2", (2, 0), Fraction(6)),
    ("3 * z1 * z2 - 2", (1, 1), Fraction(1)),
    ("-z1^2 + 1/3", (2, 0), Fraction(-11, 3)),
])
def test_parse_poly(text, point, value):
    p = parse_poly(text, 2)
    assert p(tuple(Fraction(v) for v in point)) == value


def test_parse_errors():
    with pytest.raises(ValueError):
        parse_poly("z3", 2)
    with pytest.raises(ValueError):
        parse_poly("", 2)
    with pytest.raises(ValueError):
        parse_poly("1 +", 2)
    with pytest.raises(ValueError):
        parse_poly("q1", 2)


def test_format_round_trip():
    p = parse_poly("1/2 * z1^2 - z2 + 3", 2)
    again = parse_poly(format_poly(p), 2)
    assert p == again


coeffs = st.fractions(min_value=-3, max_value=3, max_denominator=4)
exponents = st.tuples(st.integers(0, 2), st.integers(0, 2))


@st.composite
def polys(draw):
    n_terms = draw(st.integers(0, 4))
    terms = {}
    for _ in range(n_terms):
        e = draw(exponents)
        c = draw(coeffs)
        if c:
            terms[e] = terms.get(e, Fraction(0)) + c
    return Poly(2, {k: v for k, v in terms.items() if v})


@settings(max_examples=60, deadline=None)
@given(polys(), polys(), polys())
def test_ring_axioms(p, q, r):
    assert (p + q) * r == p * r + q * r
    assert p * q == q * p
    assert p + (-p) == Poly.zero(2)


@settings(max_examples=60, deadline=None)
@given(polys(), polys())
def test_leibniz_rule(p, q):
    lhs = (p * q).diff(0)
    rhs = p.diff(0) * q + p * q.diff(0)
    assert lhs == rhs


@settings(max_examples=40, deadline=None)
@given(polys())
def test_format_parse_round_trip(p):
    assert parse_poly(format_poly(p), 2) == p
