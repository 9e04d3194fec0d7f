"""Rotation-group primitives: hat/vee, exp/log, projections, error maps."""
import numpy as np
import pytest

from se3quad import (attitude_error, angular_velocity_error, exp_so3, hat,
                     inv_right_jacobian_so3, log_so3, project_so3, sat, vee)

from conftest import random_rotation


def test_hat_vee_roundtrip():
    rng = np.random.default_rng(0)
    for _ in range(100):
        v = rng.standard_normal(3) * 10
        S = hat(v)
        assert np.allclose(S, -S.T)
        assert np.allclose(vee(S), v)


def test_hat_is_cross_product():
    rng = np.random.default_rng(1)
    for _ in range(100):
        a, b = rng.standard_normal(3), rng.standard_normal(3)
        assert np.allclose(hat(a) @ b, np.cross(a, b), atol=1e-14)


def test_exp_log_roundtrip_up_to_pi():
    # ||eta|| <= 3 stays clear of the pi cut where log is rejected
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(10000):
        eta = rng.standard_normal(3)
        n = np.linalg.norm(eta)
        if n > 3.0:
            eta *= 3.0 * rng.uniform() / n
        back = log_so3(exp_so3(eta))
        worst = max(worst, np.linalg.norm(back - eta))
    assert worst < 1e-9, worst


def test_exp_small_angle_branch():
    rng = np.random.default_rng(3)
    for scale in (1e-12, 1e-9, 1e-7):
        eta = rng.standard_normal(3) * scale
        R = exp_so3(eta)
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-15)
        assert np.allclose(log_so3(R), eta, atol=1e-15)


def test_exp_matches_known_rotation():
    R = exp_so3(np.array([0.0, 0.0, np.pi / 2]))
    expected = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert np.allclose(R, expected, atol=1e-15)


def test_log_rejects_near_pi():
    R = exp_so3(np.array([np.pi - 1e-9, 0.0, 0.0]))
    with pytest.raises(ValueError):
        log_so3(R)


def test_project_so3_recovers_noisy_rotation():
    rng = np.random.default_rng(4)
    for _ in range(200):
        R = random_rotation(rng)
        M = R + rng.standard_normal((3, 3)) * 1e-6
        P = project_so3(M)
        assert np.allclose(P.T @ P, np.eye(3), atol=1e-12)
        assert np.linalg.det(P) > 0.0
        assert np.linalg.norm(P - R) < 1e-5


def test_project_so3_idempotent_on_rotations():
    rng = np.random.default_rng(5)
    for _ in range(50):
        R = random_rotation(rng)
        assert np.allclose(project_so3(R), R, atol=1e-13)


def test_attitude_error_identity_relation():
    # ||e_R||^2 = Psi (2 - Psi) holds exactly on SO(3)
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(10000):
        R = random_rotation(rng)
        R_d = random_rotation(rng)
        psi, e_R = attitude_error(R, R_d)
        worst = max(worst, abs(np.dot(e_R, e_R) - psi * (2.0 - psi)))
    assert worst < 1e-12, worst


def test_attitude_error_zero_at_alignment():
    rng = np.random.default_rng(7)
    R = random_rotation(rng)
    psi, e_R = attitude_error(R, R)
    assert abs(psi) < 1e-15
    assert np.linalg.norm(e_R) < 1e-15


def test_angular_velocity_error_definition():
    rng = np.random.default_rng(8)
    for _ in range(100):
        R, R_d = random_rotation(rng), random_rotation(rng)
        Om, Om_d = rng.standard_normal(3), rng.standard_normal(3)
        e = angular_velocity_error(R, Om, R_d, Om_d)
        assert np.allclose(e, Om - R.T @ R_d @ Om_d, atol=1e-14)


def test_sat_componentwise():
    y = np.array([-3.0, 0.5, 2.0])
    assert np.allclose(sat(1.0, y), [-1.0, 0.5, 1.0])
    assert np.allclose(sat(5.0, y), y)
    with pytest.raises(ValueError):
        sat(0.0, y)


def test_inv_right_jacobian_small_angle_limit():
    J = inv_right_jacobian_so3(np.zeros(3))
    assert np.allclose(J, np.eye(3), atol=1e-15)


def test_inv_right_jacobian_against_fd():
    # eta(t) with R_ref exp(eta(t)) spinning at constant body rate Omega:
    # check eta_dot = Jr_inv(eta) Omega against a finite difference of log
    rng = np.random.default_rng(9)
    for _ in range(50):
        eta = rng.standard_normal(3)
        if np.linalg.norm(eta) > 2.5:
            eta *= 2.5 / np.linalg.norm(eta)
        Om = rng.standard_normal(3)
        h = 1e-6
        eta_p = log_so3(exp_so3(eta) @ exp_so3(Om * h))
        eta_m = log_so3(exp_so3(eta) @ exp_so3(-Om * h))
        fd = (eta_p - eta_m) / (2.0 * h)
        assert np.allclose(inv_right_jacobian_so3(eta) @ Om, fd, atol=1e-6)
