import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srex.errors import DimensionMismatchError
from srex.poly import Poly
from srex.structures import heisenberg, martinet
from srex.vfield import (
    BracketWord,
    PolyVecField,
    bracket_of_word,
    evaluate,
    lie_bracket,
)

from _oracles import bracket_fd, flow_commutator_richardson, random_field


def test_constant_linear_bracket_by_hand():
    # [d/dz1, z1 d/dz2] = d/dz2
    X = PolyVecField.coordinate(2, 0)
    Y = PolyVecField([Poly.zero(2), Poly.variable(2, 0)])
    assert lie_bracket(X, Y) == PolyVecField.coordinate(2, 1)


def test_heisenberg_bracket():
    S = heisenberg()
    assert lie_bracket(S.frame[0], S.frame[1]) == PolyVecField.coordinate(3, 2)


def test_martinet_bracket():
    S = martinet()
    b = lie_bracket(S.frame[0], S.frame[1])
    assert b == PolyVecField([Poly.zero(3), Poly.zero(3), Poly.variable(3, 0)])


def test_bracket_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        lie_bracket(PolyVecField.coordinate(2, 0), PolyVecField.coordinate(3, 0))


def test_word_length_one_returns_frame_field():
    S = martinet()
    assert bracket_of_word(S.frame, BracketWord((2,))) == S.frame[1]


def test_martinet_words():
    S = martinet()
    assert bracket_of_word(S.frame, (1, 1, 2)) == PolyVecField.coordinate(3, 2)
    assert bracket_of_word(S.frame, (2, 1, 2)).is_zero()


def test_word_validation():
    S = martinet()
    with pytest.raises(ValueError):
        bracket_of_word(S.frame, (1, 3))
    with pytest.raises(ValueError):
        BracketWord(())
    with pytest.raises(ValueError):
        BracketWord((0, 1))


def test_evaluate_examples():
    assert np.allclose(evaluate(PolyVecField.coordinate(3, 0), [2.0, 3.0, 4.0]),
                       [1, 0, 0])
    S = martinet()
    b = lie_bracket(S.frame[0], S.frame[1])
    assert np.allclose(evaluate(b, [0.0, 0.0, 0.0]), [0, 0, 0])
    assert np.allclose(evaluate(b, [2.0, 0.0, 0.0]), [0, 0, 2])


def test_evaluate_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        evaluate(PolyVecField.coordinate(3, 0), [1.0, 2.0])


def test_jacobian_matches_fd():
    rng = np.random.default_rng(3)
    X = random_field(rng, 3)
    from _oracles import numeric_jacobian
    pt = rng.uniform(-1, 1, 3)
    assert np.allclose(X.jacobian(pt), numeric_jacobian(X, pt), atol=1e-7)


def test_bracket_against_fd_jacobian_oracle():
    rng = np.random.default_rng(7)
    for _ in range(10):
        X = random_field(rng, 3)
        Y = random_field(rng, 3)
        b = lie_bracket(X, Y)
        pt = rng.uniform(-0.8, 0.8, 3)
        expect = bracket_fd(X, Y, pt)
        scale = max(1.0, np.linalg.norm(expect))
        assert np.linalg.norm(b(pt) - expect) / scale < 1e-6


dims = st.integers(2, 4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), dims)
def test_antisymmetry_exact(seed, dim):
    rng = np.random.default_rng(seed)
    X = random_field(rng, dim)
    Y = random_field(rng, dim)
    assert (lie_bracket(X, Y) + lie_bracket(Y, X)).is_zero()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_jacobi_identity_exact(seed, dim):
    rng = np.random.default_rng(seed)
    X = random_field(rng, dim, max_degree=3, terms=2)
    Y = random_field(rng, dim, max_degree=3, terms=2)
    Z = random_field(rng, dim, max_degree=3, terms=2)
    total = (lie_bracket(X, lie_bracket(Y, Z))
             + lie_bracket(Y, lie_bracket(Z, X))
             + lie_bracket(Z, lie_bracket(X, Y)))
    assert total.is_zero()


def test_flow_commutator_single_scale():
    # the plain commutator map carries an O(sqrt(t)) bias; it should agree
    # loosely at t = 1e-6 while the extrapolated version agrees tightly
    rng = np.random.default_rng(11)
    from _oracles import flow_commutator
    X = random_field(rng, 3, max_degree=2, terms=2)
    Y = random_field(rng, 3, max_degree=2, terms=2)
    b = lie_bracket(X, Y)
    q = rng.uniform(-0.5, 0.5, 3)
    expect = b(q)
    if np.linalg.norm(expect) < 1e-6:
        pytest.skip("bracket vanishes at the sample point")
    got = flow_commutator(X, Y, q, 1e-6)
    assert np.linalg.norm(got - expect) / np.linalg.norm(expect) < 1e-2


def test_flow_commutator_richardson_tight():
    rng = np.random.default_rng(13)
    worst = 0.0
    checked = 0
    while checked < 10:
        X = random_field(rng, 3, max_degree=3, terms=3)
        Y = random_field(rng, 3, max_degree=3, terms=3)
        q = rng.uniform(-0.5, 0.5, 3)
        expect = lie_bracket(X, Y)(q)
        if np.linalg.norm(expect) < 1e-3:
            continue
        got = flow_commutator_richardson(X, Y, q, 1e-6)
        worst = max(worst, np.linalg.norm(got - expect) / np.linalg.norm(expect))
        checked += 1
    assert worst < 1e-4
