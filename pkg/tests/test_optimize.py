import math

import numpy as np
import pytest

from srex.errors import PreconditionError
from srex.optimize import (
    DiscretizedControl,
    SignVerdict,
    constant_sign_check,
    corner_test,
    minimize_length,
    shoot,
    shoot_jacobian_fd,
    shoot_with_jacobian,
)
from srex.structures import ControlSignal, engel, heisenberg, martinet


def test_shoot_heisenberg_straight():
    S = heisenberg()
    c = DiscretizedControl.constant(8, 0.0)
    assert np.allclose(shoot(S, np.zeros(3), c, 1.0), [1.0, 0.0, 0.0],
                       atol=1e-10)


def test_shoot_zero_speed():
    S = heisenberg()
    c = DiscretizedControl.constant(4, 1.2)
    x0 = np.array([0.3, -0.2, 0.5])
    assert np.allclose(shoot(S, x0, c, 0.0), x0)


def test_shoot_martinet_vertical():
    M = martinet()
    c = DiscretizedControl.constant(8, math.pi / 2)
    assert np.allclose(shoot(M, np.zeros(3), c, 0.7), [0.0, 0.7, 0.0],
                       atol=1e-10)


def test_control_refinement_reproduces_curve():
    S = heisenberg()
    rng = np.random.default_rng(4)
    c = DiscretizedControl(rng.uniform(-1, 1, 8))
    fine = c.refine(32)
    a = shoot(S, np.zeros(3), c, 0.8)
    b = shoot(S, np.zeros(3), fine, 0.8)
    assert np.allclose(a, b, atol=1e-10)


@pytest.mark.parametrize("structure", [heisenberg, engel])
def test_gradient_routes_agree(structure):
    S = structure()
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(20):
        c = DiscretizedControl(rng.uniform(-1.5, 1.5, 6))
        speed = rng.uniform(0.4, 1.2)
        _, J = shoot_with_jacobian(S, np.zeros(S.dim), c, speed,
                                   rtol=1e-12, atol=1e-13)
        Jfd = shoot_jacobian_fd(S, np.zeros(S.dim), c, speed,
                                rtol=1e-12, atol=1e-13)
        worst = max(worst, np.linalg.norm(J - Jfd) / max(np.linalg.norm(J), 1e-12))
    assert worst <= 1e-4


def test_minimize_heisenberg_straight_line():
    S = heisenberg()
    res = minimize_length(S, np.zeros(3), np.array([1.0, 0.0, 0.0]), 16,
                          DiscretizedControl.constant(16, 0.1))
    assert res.converged
    assert abs(res.length - 1.0) <= 1e-4
    assert res.endpoint_error <= 1e-6
    dirs = res.control.directions()
    assert np.allclose(dirs, [1.0, 0.0], atol=1e-3)


def test_minimize_fd_gradient_route():
    S = heisenberg()
    res = minimize_length(S, np.zeros(3), np.array([1.0, 0.0, 0.0]), 8,
                          DiscretizedControl.constant(8, 0.05),
                          grad_mode="fd")
    assert abs(res.length - 1.0) <= 1e-4
    assert res.endpoint_error <= 1e-6


def test_minimize_same_point_returns_zero_length():
    S = heisenberg()
    res = minimize_length(S, np.zeros(3), np.zeros(3), 8,
                          DiscretizedControl.constant(8, 0.3))
    assert res.length <= 1e-6
    assert res.endpoint_error <= 1e-6


def test_minimize_martinet_abnormal_line():
    M = martinet()
    L = 0.4
    res = minimize_length(M, np.zeros(3), np.array([0.0, L, 0.0]), 16,
                          DiscretizedControl.constant(16, math.pi / 2 + 0.05))
    assert res.endpoint_error <= 1e-6
    assert abs(res.length - L) <= 1e-4


def test_refinement_monotonicity():
    S = heisenberg()
    x1 = np.array([0.8, 0.3, 0.15])
    lengths = []
    ctrl = DiscretizedControl.constant(8, 0.4)
    for N in (8, 16, 32, 64):
        ctrl = ctrl if ctrl.N == N else ctrl.refine(N)
        res = minimize_length(S, np.zeros(3), x1, N, ctrl,
                              inner_maxiter=60, max_outer=8)
        assert res.endpoint_error <= 1e-6
        lengths.append(res.length)
        ctrl = res.control
    for a, b in zip(lengths, lengths[1:]):
        assert b <= a + 1e-8


def test_corner_heisenberg_margin():
    S = heisenberg()
    rep = corner_test(S, np.zeros(3), [1.0, 0.0], [0.0, 1.0], 0.5, 32,
                      inner_maxiter=60, max_outer=8)
    assert rep.margin >= 1e-3
    assert rep.result.endpoint_error <= 1e-6


def test_corner_straight_not_shortened():
    S = heisenberg()
    rep = corner_test(S, np.zeros(3), [1.0, 0.0], [1.0, 0.0], 0.5, 32,
                      endpoint_tol=1e-8, inner_maxiter=60, max_outer=8)
    assert rep.margin <= 1e-6


def test_corner_rejects_odd_segment_count():
    S = heisenberg()
    with pytest.raises(ValueError):
        corner_test(S, np.zeros(3), [1.0, 0.0], [0.0, 1.0], 0.5, 33)


def test_corner_rejects_non_unit_legs():
    S = heisenberg()
    with pytest.raises(PreconditionError):
        corner_test(S, np.zeros(3), [2.0, 0.0], [0.0, 1.0], 0.5, 32)


def test_constant_sign_check_cases():
    times = np.linspace(0.0, 1.0, 11)
    v = np.array([1.0, 0.0])
    u_pos = ControlSignal(times, np.tile(v, (11, 1)))
    assert constant_sign_check(u_pos, v, 1e-9).verdict is SignVerdict.CONSTANT_POSITIVE
    u_neg = ControlSignal(times, np.tile(-v, (11, 1)))
    assert constant_sign_check(u_neg, v, 1e-9).verdict is SignVerdict.CONSTANT_NEGATIVE
    samples = np.tile(v, (11, 1))
    samples[times >= 0.5] = -v
    u_mix = ControlSignal(times, samples)
    out = constant_sign_check(u_mix, v, 1e-9)
    assert out.verdict is SignVerdict.SIGN_CHANGE
    assert out.change_times == [0.5]


def test_constant_sign_check_parallel_precondition():
    times = np.linspace(0.0, 1.0, 5)
    angles = np.linspace(0.0, 0.5, 5)
    u = ControlSignal(times, np.column_stack([np.cos(angles), np.sin(angles)]))
    with pytest.raises(PreconditionError):
        constant_sign_check(u, [1.0, 0.0], 1e-3)


def test_minimizer_controls_pass_constant_sign_check():
    S = heisenberg()
    res = minimize_length(S, np.zeros(3), np.array([1.0, 0.0, 0.0]), 16,
                          DiscretizedControl.constant(16, 0.05))
    grid = res.control.segment_times()[:-1]
    u = ControlSignal(grid, res.control.directions())
    out = constant_sign_check(u, [1.0, 0.0], 1e-2)
    assert out.verdict is SignVerdict.CONSTANT_POSITIVE
