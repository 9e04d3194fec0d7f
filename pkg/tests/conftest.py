import numpy as np
import pytest

from se3quad import Gains, QuadrotorParams, TrajectoryCommand


@pytest.fixture
def sim_params():
    """Vehicle constants of the bundled scenarios, without disturbances."""
    return QuadrotorParams(m=0.755, J=np.diag([0.557e-2, 0.557e-2, 1.05e-2]))


@pytest.fixture
def sim_params_disturbed():
    return QuadrotorParams(
        m=0.755, J=np.diag([0.557e-2, 0.557e-2, 1.05e-2]),
        Delta_x=np.array([-0.02, 0.01, -0.03]),
        Delta_R=np.array([0.01, -0.02, 0.01]))


@pytest.fixture
def sim_gains():
    return Gains(k_x=13.84, k_v=4.84, k_R=0.67, k_Omega=0.11, k_I=0.01)


def hover_command(x0=(0.0, 0.0, -0.5)):
    """Constant set-point command; the closed loop has an exact equilibrium."""
    x0 = np.asarray(x0, dtype=float)
    zero = lambda t: np.zeros(3)
    return TrajectoryCommand(
        x_d=lambda t: x0.copy(), x_d_dot=zero, x_d_ddot=zero,
        b_1d=lambda t: np.array([1.0, 0.0, 0.0]), b_1d_dot=zero,
        x_d_dddot=zero)


@pytest.fixture
def hover_cmd():
    return hover_command()


def random_rotation(rng, max_angle=np.pi - 0.2):
    from se3quad import exp_so3
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    return exp_so3(axis * rng.uniform(0.0, max_angle))
