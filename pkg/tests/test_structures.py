import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srex.errors import PreconditionError
from srex.poly import Poly, parse_poly
from srex.structures import (
    ControlSignal,
    Dilation,
    SRStructure,
    blowup_control,
    dilate,
    engel,
    flag_dimensions,
    fn_structure_bracket,
    free_nilpotent_basis_field,
    free_nilpotent_frame,
    heisenberg,
    martinet,
    nilpotent_approximation,
    pushforward_rescaled,
)
from srex.vfield import PolyVecField, bracket_of_word, lie_bracket


# -- flags -------------------------------------------------------------------

def test_flag_heisenberg():
    assert flag_dimensions(heisenberg(), [0, 0, 0], 2) == [2, 3]


def test_flag_martinet():
    assert flag_dimensions(martinet(), [0, 0, 0], 3) == [2, 2, 3]
    # off the singular plane the bracket spans immediately
    assert flag_dimensions(martinet(), [1, 0, 0], 3) == [2, 3, 3]


def test_flag_engel():
    assert flag_dimensions(engel(), [0, 0, 0, 0], 3) == [2, 3, 4]


def test_flag_free_nilpotent():
    for step, expected in ((2, [2, 3]), (3, [2, 3, 5]), (4, [2, 3, 5, 8])):
        S = free_nilpotent_frame(step)
        assert flag_dimensions(S, [0] * S.dim, step) == expected


def test_flag_float_point_matches_exact():
    S = martinet()
    exact = flag_dimensions(S, [0, 0, 0], 3)
    floats = flag_dimensions(S, [0.0, 0.0, 0.0], 3)
    assert exact == floats


def test_flag_float_threshold_near_singular_plane():
    # a bracket contribution below the relative SVD threshold does not
    # count toward the rank
    S = martinet()
    assert flag_dimensions(S, [1e-14, 0.0, 0.0], 2) == [2, 2]
    assert flag_dimensions(S, [1e-3, 0.0, 0.0], 2) == [2, 3]


# -- free nilpotent frames -----------------------------------------------------

def test_free2_is_heisenberg():
    S = free_nilpotent_frame(2)
    assert S.frame == heisenberg().frame
    assert lie_bracket(*S.frame) == PolyVecField.coordinate(3, 2)


@pytest.mark.parametrize("step", [2, 3, 4])
def test_free_nilpotent_truncation(step):
    S = free_nilpotent_frame(step)
    for word in itertools.product((1, 2), repeat=step + 1):
        assert bracket_of_word(S.frame, word).is_zero()


@pytest.mark.parametrize("step", [2, 3, 4])
def test_free_nilpotent_hall_structure_constants(step):
    S = free_nilpotent_frame(step)
    n = S.dim
    basis = [free_nilpotent_basis_field(i, step) for i in range(n)]
    assert basis[0] == S.frame[0] and basis[1] == S.frame[1]
    for i in range(n):
        for j in range(n):
            expected = PolyVecField.zero(n)
            for target, coeff in fn_structure_bracket(i, j, step).items():
                expected = expected + basis[target].scale(coeff)
            assert lie_bracket(basis[i], basis[j]) == expected


def test_free_nilpotent_rejects_bad_step():
    with pytest.raises(ValueError):
        free_nilpotent_frame(5)


# -- dilations ------------------------------------------------------------------

def test_dilate_identity_and_powers():
    d = Dilation((1, 1, 2), 1.0)
    z = np.array([0.3, -0.7, 2.0])
    assert np.allclose(dilate(d, z), z)
    d2 = Dilation((1, 1, 2), 2.0)
    assert np.allclose(dilate(d2, [1.0, 1.0, 1.0]), [2, 2, 4])


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 4.0), st.floats(0.1, 4.0), st.integers(0, 1000))
def test_dilation_group_law(nu, mu, seed):
    rng = np.random.default_rng(seed)
    weights = (1, 1, 2, 3)
    z = rng.uniform(-2, 2, 4)
    lhs = dilate(Dilation(weights, nu), dilate(Dilation(weights, mu), z))
    rhs = dilate(Dilation(weights, nu * mu), z)
    assert np.allclose(lhs, rhs, rtol=1e-12)


# -- graded rescaling / nilpotent approximation -----------------------------------

def test_pushforward_fixed_points():
    for S in (heisenberg(), martinet(), free_nilpotent_frame(3),
              free_nilpotent_frame(4)):
        assert pushforward_rescaled(S, Fraction(1, 3)) == S
        assert pushforward_rescaled(S, 2) == S


def test_pushforward_exponent_formula():
    # X = d/dx + x^3 d/dy with weights (1, 2): the x^3 term scales by nu^2
    X = PolyVecField([Poly.const(2, 1), parse_poly("z1^3", 2)])
    Y = PolyVecField([Poly.zero(2), Poly.const(2, 1)])
    S = SRStructure([X, Y], weights=(1, 2))
    nu = Fraction(1, 2)
    rescaled = pushforward_rescaled(S, nu)
    expected = PolyVecField([Poly.const(2, 1),
                             parse_poly("1/4 * z1^3", 2)])
    assert rescaled.frame[0] == expected
    # the constant second field has weight-2 target: nu^{1-2} = 2
    assert rescaled.frame[1] == PolyVecField([Poly.zero(2), Poly.const(2, 2)])


def test_pushforward_requires_weights():
    S = SRStructure(heisenberg().frame, weights=None)
    with pytest.raises(PreconditionError):
        pushforward_rescaled(S, 2)


def test_nilpotent_approximation_drops_higher_order():
    X1 = PolyVecField.from_literals(["1", "0", "0"])
    X2 = PolyVecField.from_literals(["0", "1", "1/2 * z1^2 + z1^3"])
    S = SRStructure([X1, X2], weights=(1, 1, 3))
    approx = nilpotent_approximation(S)
    assert approx.frame[1] == PolyVecField.from_literals(
        ["0", "1", "1/2 * z1^2"])
    assert approx.frame[0] == X1


def test_nilpotent_approximation_idempotent_and_fixed_points():
    X1 = PolyVecField.from_literals(["1", "0", "0", "0"])
    X2 = PolyVecField.from_literals(["0", "1", "z1 + z1^2", "1/2 * z1^2 + z2^3"])
    S = SRStructure([X1, X2], weights=(1, 1, 2, 3))
    approx = nilpotent_approximation(S)
    assert approx.frame[1] == engel().frame[1]
    assert nilpotent_approximation(approx) == approx
    for F in (heisenberg(), martinet(), free_nilpotent_frame(4)):
        assert nilpotent_approximation(F) == F


def test_nilpotent_approximation_detects_bad_coordinates():
    # weights that are not privileged for this frame: truncation kills
    # bracket generation
    X1 = PolyVecField.from_literals(["1", "0", "0"])
    X2 = PolyVecField.from_literals(["0", "1", "1/2 * z1^2"])
    S = SRStructure([X1, X2], weights=(1, 1, 2))
    with pytest.raises(PreconditionError):
        nilpotent_approximation(S)


def test_rescaled_converges_to_approximation():
    X1 = PolyVecField.from_literals(["1", "0", "0"])
    X2 = PolyVecField.from_literals(["0", "1", "1/2 * z1^2 + z1^3"])
    S = SRStructure([X1, X2], weights=(1, 1, 3))
    approx = nilpotent_approximation(S)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (200, 3))
    pts /= np.maximum(1.0, np.linalg.norm(pts, axis=1))[:, None]

    def sup_err(eps):
        worst = 0.0
        res = pushforward_rescaled(S, eps)
        for X, Y in zip(res.frame, approx.frame):
            D = X - Y
            for z in pts:
                worst = max(worst, float(np.max(np.abs(D(z)))))
        return worst

    errs = [sup_err(e) for e in (Fraction(1, 10), Fraction(1, 20), Fraction(1, 40))]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(1.6 <= r <= 2.4 for r in ratios)


# -- control signals --------------------------------------------------------------

def test_control_signal_unit_check():
    times = np.linspace(0, 1, 5)
    good = np.column_stack([np.cos(times), np.sin(times)])
    ControlSignal(times, good)
    with pytest.raises(ValueError):
        ControlSignal(times, 1.5 * good)
    ControlSignal(times, 1.5 * good, arclength=False)


def test_blowup_constant_and_full_interval():
    times = np.linspace(0, 2, 9)
    samples = np.tile([1.0, 0.0], (9, 1))
    u = ControlSignal(times, samples)
    v = blowup_control(u, 0.0, 2.0)
    assert v.times[0] == 0.0 and v.times[-1] == 1.0
    assert np.allclose(v.samples, samples[: len(v.times)])


def test_blowup_step_switch_maps_to_midpoint():
    times = np.linspace(0, 1, 101)
    samples = np.where(times[:, None] < 0.5, [1.0, 0.0], [0.0, 1.0])
    u = ControlSignal(times, samples)
    v = blowup_control(u, 0.25, 0.75)
    switch = v.times[np.argmax(v.samples[:, 1] > 0.5)]
    assert math.isclose(switch, 0.5, abs_tol=1e-12)


def test_blowup_preserves_sample_range():
    rng = np.random.default_rng(5)
    times = np.sort(rng.uniform(0, 1, 20))
    times[0], times[-1] = 0.0, 1.0
    angles = rng.uniform(0, 2 * np.pi, 20)
    samples = np.column_stack([np.cos(angles), np.sin(angles)])
    u = ControlSignal(times, samples)
    v = blowup_control(u, times[3], times[15])
    for row in v.samples:
        assert any(np.allclose(row, s) for s in samples)


def test_blowup_empty_interval():
    u = ControlSignal([0.0, 1.0], [[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(PreconditionError):
        blowup_control(u, 0.7, 0.7)


# -- structure validation -----------------------------------------------------------

def test_structure_weight_validation():
    frame = heisenberg().frame
    with pytest.raises(ValueError):
        SRStructure(frame, weights=(2, 2, 3))  # w1 != 1
    with pytest.raises(ValueError):
        SRStructure(frame, weights=(1, 2))  # wrong length
    with pytest.raises(ValueError):
        SRStructure(frame, weights=(1, 2, 1))  # decreasing
