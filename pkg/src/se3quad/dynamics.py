"""Quadrotor rigid-body dynamics and a fixed-step RK4 integrator.

State lives on R^3 x R^3 x SO(3) x R^3 with the third inertial axis pointing
down, so total thrust enters as -f*R@e3. Fixed force/moment disturbances
Delta_x, Delta_R act on the translational and rotational channels.
"""

from dataclasses import dataclass, field

import numpy as np

from .geom import hat, project_so3

_E3 = np.array([0.0, 0.0, 1.0])


def _vec3(x):
    a = np.asarray(x, dtype=float)
    if a.shape != (3,):
        raise ValueError("expected a 3-vector, got shape %s" % (a.shape,))
    return a


@dataclass
class QuadrotorParams:
    """Physical constants of the vehicle.

    J must be symmetric positive-definite. The arm length d is carried for
    completeness but unused at the thrust/moment level of the model.
    """
    m: float
    J: np.ndarray
    g: float = 9.81
    Delta_x: np.ndarray = field(default_factory=lambda: np.zeros(3))
    Delta_R: np.ndarray = field(default_factory=lambda: np.zeros(3))
    d: float = 0.0

    def __post_init__(self):
        self.J = np.asarray(self.J, dtype=float)
        self.Delta_x = _vec3(self.Delta_x)
        self.Delta_R = _vec3(self.Delta_R)
        if self.m <= 0.0:
            raise ValueError("QuadrotorParams: m must be positive")
        if self.g <= 0.0:
            raise ValueError("QuadrotorParams: g must be positive")
        if self.J.shape != (3, 3) or np.linalg.norm(self.J - self.J.T) > 1e-12:
            raise ValueError("QuadrotorParams: J must be symmetric 3x3")
        if np.min(np.linalg.eigvalsh(self.J)) <= 0.0:
            raise ValueError("QuadrotorParams: J must be positive-definite")
        self.J_inv = np.linalg.inv(self.J)


@dataclass
class QuadrotorState:
    """Position, velocity (inertial), attitude, angular velocity (body)."""
    x: np.ndarray
    v: np.ndarray
    R: np.ndarray
    Omega: np.ndarray

    def __post_init__(self):
        self.x = _vec3(self.x)
        self.v = _vec3(self.v)
        self.Omega = _vec3(self.Omega)
        self.R = np.asarray(self.R, dtype=float)
        if self.R.shape != (3, 3):
            raise ValueError("QuadrotorState: R must be 3x3")

    def copy(self):
        return QuadrotorState(self.x.copy(), self.v.copy(),
                              self.R.copy(), self.Omega.copy())


@dataclass
class ControlInput:
    """Thrust magnitude along -R@e3 and body-frame moment. Not clamped."""
    f: float
    M: np.ndarray

    def __post_init__(self):
        self.M = _vec3(self.M)
        if not (np.isfinite(self.f) and np.all(np.isfinite(self.M))):
            raise ValueError("ControlInput: f and M must be finite")


@dataclass
class StateDerivative:
    x_dot: np.ndarray
    v_dot: np.ndarray
    R_dot: np.ndarray
    Omega_dot: np.ndarray


def state_derivative(s, u, p):
    """Rigid-body equations of motion.

    x_dot = v
    m v_dot = m g e3 - f R e3 + Delta_x
    R_dot = R hat(Omega)
    J Omega_dot = M + Delta_R - Omega x J Omega
    """
    v_dot = p.g * _E3 - (u.f / p.m) * (s.R @ _E3) + p.Delta_x / p.m
    R_dot = s.R @ hat(s.Omega)
    Omega_dot = p.J_inv @ (u.M + p.Delta_R - np.cross(s.Omega, p.J @ s.Omega))
    return StateDerivative(s.v.copy(), v_dot, R_dot, Omega_dot)


def _advance(s, k, h):
    # intermediate RK4 stage: plain embedded-space step, no reprojection
    return QuadrotorState(s.x + h * k.x_dot, s.v + h * k.v_dot,
                          s.R + h * k.R_dot, s.Omega + h * k.Omega_dot)


def rk4_step(s, u, p, dt, t=0.0, extras=None, extras_rate=None):
    """One classical RK4 step with the control input held over [t, t+dt].

    The attitude block is integrated in the embedding R^{3x3} and projected
    back to SO(3) once at the end of the step.

    If `extras` (a 1-D array of integrator extras such as controller integral
    states) and `extras_rate(t, stage_state, stage_extras) -> array` are
    given, the extras advance through the same four stages and the function
    returns (next_state, next_extras); otherwise it returns next_state alone.
    """
    if dt <= 0.0:
        raise ValueError("rk4_step: dt must be positive")
    have_extras = extras is not None
    if have_extras:
        extras = np.asarray(extras, dtype=float)

    k1 = state_derivative(s, u, p)
    r1 = extras_rate(t, s, extras) if have_extras else None

    s2 = _advance(s, k1, 0.5 * dt)
    e2 = extras + 0.5 * dt * r1 if have_extras else None
    k2 = state_derivative(s2, u, p)
    r2 = extras_rate(t + 0.5 * dt, s2, e2) if have_extras else None

    s3 = _advance(s, k2, 0.5 * dt)
    e3 = extras + 0.5 * dt * r2 if have_extras else None
    k3 = state_derivative(s3, u, p)
    r3 = extras_rate(t + 0.5 * dt, s3, e3) if have_extras else None

    s4 = _advance(s, k3, dt)
    e4 = extras + dt * r3 if have_extras else None
    k4 = state_derivative(s4, u, p)
    r4 = extras_rate(t + dt, s4, e4) if have_extras else None

    c = dt / 6.0
    x_n = s.x + c * (k1.x_dot + 2 * k2.x_dot + 2 * k3.x_dot + k4.x_dot)
    v_n = s.v + c * (k1.v_dot + 2 * k2.v_dot + 2 * k3.v_dot + k4.v_dot)
    R_n = project_so3(s.R + c * (k1.R_dot + 2 * k2.R_dot + 2 * k3.R_dot + k4.R_dot))
    W_n = s.Omega + c * (k1.Omega_dot + 2 * k2.Omega_dot + 2 * k3.Omega_dot + k4.Omega_dot)
    s_next = QuadrotorState(x_n, v_n, R_n, W_n)

    if have_extras:
        return s_next, extras + c * (r1 + 2 * r2 + 2 * r3 + r4)
    return s_next
