"""Rigid-body equations of motion and the RK4 integrator."""
import numpy as np
import pytest

from se3quad import (ControlInput, QuadrotorParams, QuadrotorState, exp_so3,
                     log_so3, rk4_step, state_derivative)


def _hover_state():
    return QuadrotorState(np.zeros(3), np.zeros(3), np.eye(3), np.zeros(3))


def test_free_fall_one_step(sim_params):
    # f = 0: vdot = g e3 exactly, and RK4 integrates a constant field exactly
    s = _hover_state()
    u = ControlInput(0.0, np.zeros(3))
    s1 = rk4_step(s, u, sim_params, 0.01)
    assert s1.v[2] == pytest.approx(0.0981, abs=1e-12)
    assert np.allclose(s1.v[:2], 0.0)
    # x picks up the half-g t^2 term
    assert s1.x[2] == pytest.approx(0.5 * 9.81 * 0.01 ** 2, rel=1e-12)


def test_hover_force_balance(sim_params):
    s = _hover_state()
    u = ControlInput(sim_params.m * sim_params.g, np.zeros(3))
    d = state_derivative(s, u, sim_params)
    assert np.linalg.norm(d.v_dot) < 1e-15
    assert np.linalg.norm(d.x_dot) < 1e-15
    assert np.linalg.norm(d.Omega_dot) < 1e-15


def test_thrust_direction_follows_attitude(sim_params):
    # body z thrust acts along -R e3 in the inertial frame
    R = exp_so3(np.array([0.3, -0.2, 0.1]))
    s = QuadrotorState(np.zeros(3), np.zeros(3), R, np.zeros(3))
    u = ControlInput(2.0, np.zeros(3))
    d = state_derivative(s, u, sim_params)
    expected = 9.81 * np.array([0, 0, 1.0]) - (2.0 / sim_params.m) * (R @ [0, 0, 1.0])
    assert np.allclose(d.v_dot, expected, atol=1e-14)


def test_euler_equation_gyroscopic_term(sim_params):
    Om = np.array([1.0, -2.0, 0.5])
    s = QuadrotorState(np.zeros(3), np.zeros(3), np.eye(3), Om)
    M = np.array([0.01, 0.02, -0.01])
    d = state_derivative(s, ControlInput(0.0, M), sim_params)
    J = sim_params.J
    assert np.allclose(J @ d.Omega_dot, M - np.cross(Om, J @ Om), atol=1e-14)


def test_disturbances_enter_both_loops(sim_params_disturbed):
    p = sim_params_disturbed
    s = _hover_state()
    d = state_derivative(s, ControlInput(p.m * p.g, np.zeros(3)), p)
    assert np.allclose(d.v_dot, p.Delta_x / p.m, atol=1e-15)
    assert np.allclose(p.J @ d.Omega_dot, p.Delta_R, atol=1e-15)


def test_pure_rotation_closes_after_full_turn(sim_params):
    # spin about e3 at 1 rad/s for 2 pi seconds: R returns to identity
    n = 628
    dt = 2.0 * np.pi / n
    s = QuadrotorState(np.zeros(3), np.zeros(3), np.eye(3),
                       np.array([0.0, 0.0, 1.0]))
    u = ControlInput(0.0, np.cross([0.0, 0.0, 1.0],
                                   sim_params.J @ [0.0, 0.0, 1.0]))
    for _ in range(n):
        s = rk4_step(s, u, sim_params, dt)
    assert np.linalg.norm(s.R - np.eye(3)) < 1e-6
    assert np.allclose(s.Omega, [0.0, 0.0, 1.0], atol=1e-9)


def test_rk4_fourth_order_convergence(sim_params):
    # halving dt shrinks the attitude endpoint error by about 2^4
    def endpoint(dt, n):
        s = QuadrotorState(np.zeros(3), np.zeros(3), np.eye(3),
                           np.array([0.8, -0.5, 0.3]))
        u = ControlInput(1.0, np.array([0.002, -0.001, 0.003]))
        for _ in range(n):
            s = rk4_step(s, u, sim_params, dt)
        return s

    ref = endpoint(1.0 / 2048, 2048)
    e1 = np.linalg.norm(endpoint(1.0 / 32, 32).R - ref.R)
    e2 = np.linalg.norm(endpoint(1.0 / 64, 64).R - ref.R)
    ratio = e1 / e2
    assert 12.0 < ratio < 20.0, ratio


def test_orthonormality_preserved_long_run(sim_params):
    s = QuadrotorState(np.zeros(3), np.zeros(3), np.eye(3),
                       np.array([0.3, -0.2, 0.4]))
    u = ControlInput(sim_params.m * sim_params.g, np.zeros(3))
    for _ in range(10000):
        s = rk4_step(s, u, sim_params, 0.01)
    assert np.linalg.norm(s.R.T @ s.R - np.eye(3)) <= 1e-9


def test_extras_advance_through_stages(sim_params):
    # extras with rate depending on the state integrate consistently:
    # here extras = integral of v, so it should match x up to RK4 accuracy
    s = _hover_state()
    u = ControlInput(0.0, np.zeros(3))
    ex = np.zeros(3)
    for k in range(100):
        s, ex = rk4_step(s, u, sim_params, 0.01, t=k * 0.01,
                         extras=ex, extras_rate=lambda t, ss, e: ss.v)
    assert np.allclose(ex, s.x, atol=1e-12)


def test_control_input_rejects_nonfinite():
    with pytest.raises(ValueError):
        ControlInput(np.nan, np.zeros(3))
    with pytest.raises(ValueError):
        ControlInput(1.0, np.array([1.0, np.inf, 0.0]))


def test_params_validation():
    with pytest.raises(ValueError):
        QuadrotorParams(m=-1.0, J=np.eye(3))
    with pytest.raises(ValueError):
        QuadrotorParams(m=1.0, J=np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        QuadrotorParams(m=1.0, J=np.ones((3, 3)))
