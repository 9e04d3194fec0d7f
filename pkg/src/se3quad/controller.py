"""Geometric tracking controller for the quadrotor.

Position mode: the desired thrust direction comes from the PID-style vector
A = -k_x e_x - k_v e_v - k_i sat(sigma, e_i) - m g e3 + m xdd_d, the computed
attitude R_c aligns -b_3c with A while steering b_1c toward the commanded
heading b_1d, and the moment law tracks (R_c, Omega_c) with feed-forward.

Omega_c is analytic (a1 * zeta3 + a2). Omega_c_dot has no closed form here;
it is obtained by central differencing Omega_c along the closed-loop flow,
which keeps the controller consistent with the analytic Jacobian assembly.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import ControlInput, QuadrotorState
from .geom import attitude_error, angular_velocity_error, exp_so3, hat, sat

_E3 = np.array([0.0, 0.0, 1.0])

EPS_THRUST = 1e-6   # ||A|| below this is a degenerate thrust direction
EPS_HEADING = 1e-6  # ||b_3c x b_1d|| below this leaves the heading undefined
H_OMEGA = 1e-4      # default step for the Omega_c_dot central difference


class ControlDegeneracyError(RuntimeError):
    """Base class for states where the computed attitude is undefined."""


class DegenerateThrustError(ControlDegeneracyError):
    pass


class HeadingSingularityError(ControlDegeneracyError):
    pass


@dataclass
class Gains:
    """Controller gains. k_i defaults to k_I when not given (one integral
    gain shared by the attitude and position loops unless split)."""
    k_x: float
    k_v: float
    k_R: float
    k_Omega: float
    k_I: float
    k_i: Optional[float] = None
    sigma: float = 1.0
    c1: float = 0.1
    c2: float = 0.1
    psi1: float = 0.9

    def __post_init__(self):
        if self.k_i is None:
            self.k_i = self.k_I
        for name in ("k_x", "k_v", "k_R", "k_Omega", "k_I", "k_i",
                     "sigma", "c1", "c2", "psi1"):
            if getattr(self, name) <= 0.0:
                raise ValueError("Gains: %s must be positive" % name)
        if self.psi1 >= 1.0:
            raise ValueError("Gains: psi1 must be < 1")


@dataclass
class TrajectoryCommand:
    """Position command x_d and heading command b_1d as functions of time.

    jerk (third derivative of x_d) is used when assembling A_dot; built-in
    trajectories supply it analytically, otherwise a central-difference
    fallback on x_d_ddot is used.
    """
    x_d: Callable
    x_d_dot: Callable
    x_d_ddot: Callable
    b_1d: Callable
    b_1d_dot: Callable
    x_d_dddot: Optional[Callable] = None

    def jerk(self, t, h=1e-5):
        if self.x_d_dddot is not None:
            return np.asarray(self.x_d_dddot(t), dtype=float)
        return (np.asarray(self.x_d_ddot(t + h), dtype=float)
                - np.asarray(self.x_d_ddot(t - h), dtype=float)) / (2.0 * h)


@dataclass
class ControllerState:
    """Integral errors, advanced alongside the plant by the integrator."""
    e_i: np.ndarray = field(default_factory=lambda: np.zeros(3))
    e_I: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.e_i = np.asarray(self.e_i, dtype=float)
        self.e_I = np.asarray(self.e_I, dtype=float)

    def as_array(self):
        return np.concatenate([self.e_i, self.e_I])

    @staticmethod
    def from_array(a):
        a = np.asarray(a, dtype=float)
        return ControllerState(a[:3].copy(), a[3:6].copy())

    def copy(self):
        return ControllerState(self.e_i.copy(), self.e_I.copy())


@dataclass
class ComputedAttitude:
    R_c: np.ndarray
    Omega_c: Optional[np.ndarray]
    Omega_c_dot: Optional[np.ndarray]
    A: np.ndarray
    b_1c: np.ndarray
    b_2c: np.ndarray
    b_3c: np.ndarray


def tracking_errors(s, cmd, t):
    """Position and velocity tracking errors (e_x, e_v) at time t."""
    e_x = s.x - np.asarray(cmd.x_d(t), dtype=float)
    e_v = s.v - np.asarray(cmd.x_d_dot(t), dtype=float)
    return e_x, e_v


def compute_A(e_x, e_v, e_i, xdd_d, gains, params):
    """Thrust-direction numerator; callers must guard ||A|| before use."""
    return (-gains.k_x * e_x - gains.k_v * e_v
            - gains.k_i * sat(gains.sigma, e_i)
            - params.m * params.g * _E3 + params.m * np.asarray(xdd_d, dtype=float))


def compute_Rc(A, b_1d):
    """Computed attitude basis from the thrust vector and heading command."""
    A = np.asarray(A, dtype=float)
    b_1d = np.asarray(b_1d, dtype=float)
    norm_A = np.linalg.norm(A)
    if norm_A < EPS_THRUST:
        raise DegenerateThrustError("||A|| = %.3e below threshold" % norm_A)
    b_3c = -A / norm_A
    w = np.cross(b_3c, b_1d)
    norm_w = np.linalg.norm(w)
    if norm_w < EPS_HEADING:
        raise HeadingSingularityError("b_1d nearly parallel to b_3c")
    b_2c = w / norm_w
    b_1c = np.cross(b_2c, b_3c)
    R_c = np.column_stack([b_1c, b_2c, b_3c])
    return ComputedAttitude(R_c, None, None, A, b_1c, b_2c, b_3c)


def thrust(A, R):
    """f = -A . (R e3): project the thrust vector onto the actual body axis."""
    return -float(np.dot(A, R @ _E3))


def integral_rates(e_x, e_v, e_R, e_Omega, gains):
    """Rates of the two integral states: (e_v + c1 e_x, e_Omega + c2 e_R)."""
    return e_v + gains.c1 * e_x, e_Omega + gains.c2 * e_R


def attitude_moment(s, R_c, Omega_c, Omega_c_dot, e_I, gains, J):
    """Moment law: PID on (e_R, e_Omega, e_I) plus angular feed-forward."""
    _, e_R = attitude_error(s.R, R_c)
    e_Omega = angular_velocity_error(s.R, s.Omega, R_c, Omega_c)
    W = s.R.T @ (R_c @ Omega_c)   # desired rate seen in the body frame
    return (-gains.k_R * e_R - gains.k_Omega * e_Omega - gains.k_I * e_I
            + hat(W) @ (J @ W) + J @ (s.R.T @ (R_c @ Omega_c_dot)))


def mode_gate(R, R_c, psi1):
    """True iff the attitude error function satisfies Psi < psi1 (strict)."""
    psi, _ = attitude_error(R, R_c)
    return psi < psi1


@dataclass
class CommandChain:
    """Everything the computed-attitude construction produces at one instant.

    Shared by the controller and the closed-loop Jacobian assembly, which
    needs the same intermediates (A_dot, the zeta rates, a1 and its rate).
    """
    t: float
    e_x: np.ndarray
    e_v: np.ndarray
    e_i: np.ndarray
    sat_e_i: np.ndarray
    D_sat: np.ndarray
    A: np.ndarray
    norm_A: float
    f: float
    b_1d: np.ndarray
    b_1d_dot: np.ndarray
    b_1c: np.ndarray
    b_2c: np.ndarray
    b_3c: np.ndarray
    R_c: np.ndarray
    A_dot: np.ndarray
    zeta1: np.ndarray
    zeta2: np.ndarray
    zeta3: np.ndarray
    b_1c_dot: np.ndarray
    b_2c_dot: np.ndarray
    b_3c_dot: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    a1_dot: np.ndarray
    Omega_c: np.ndarray


def command_chain(s, ctrl, cmd, t, gains, params):
    """Evaluate the full computed-attitude chain at state s and time t.

    Produces A, R_c, their time rates along the closed-loop flow, and the
    analytic Omega_c = a1 zeta3 + a2. Raises the degeneracy errors of
    compute_Rc when the construction is undefined.
    """
    e_x, e_v = tracking_errors(s, cmd, t)
    e_i = ctrl.e_i
    sat_e_i = sat(gains.sigma, e_i)
    D_sat = np.diag((np.abs(e_i) < gains.sigma).astype(float))
    xdd_d = np.asarray(cmd.x_d_ddot(t), dtype=float)
    A = compute_A(e_x, e_v, e_i, xdd_d, gains, params)
    norm_A = np.linalg.norm(A)
    if norm_A < EPS_THRUST:
        raise DegenerateThrustError("||A|| = %.3e below threshold" % norm_A)
    b_3c = -A / norm_A
    b_1d = np.asarray(cmd.b_1d(t), dtype=float)
    w = np.cross(b_3c, b_1d)
    norm_w = np.linalg.norm(w)
    if norm_w < EPS_HEADING:
        raise HeadingSingularityError("b_1d nearly parallel to b_3c")
    b_2c = w / norm_w
    b_1c = np.cross(b_2c, b_3c)
    R_c = np.column_stack([b_1c, b_2c, b_3c])

    f = thrust(A, s.R)
    # rates of the ingredients of A along the actual closed loop
    e_v_dot = (params.g * _E3 - (f / params.m) * (s.R @ _E3)
               + params.Delta_x / params.m - xdd_d)
    e_i_dot = e_v + gains.c1 * e_x
    A_dot = (-gains.k_x * e_v - gains.k_v * e_v_dot
             - gains.k_i * (D_sat @ e_i_dot) + params.m * cmd.jerk(t))

    zeta3 = -np.cross(b_3c, A_dot / norm_A)
    b_3c_dot = np.cross(zeta3, b_3c)
    b_1d_dot = np.asarray(cmd.b_1d_dot(t), dtype=float)
    w_dot = np.cross(b_3c_dot, b_1d) + np.cross(b_3c, b_1d_dot)
    zeta2 = np.cross(b_2c, w_dot) / norm_w
    zeta1 = np.dot(b_3c, zeta2) * b_3c + np.dot(b_2c, zeta3) * b_2c
    b_2c_dot = np.cross(zeta2, b_2c)
    b_1c_dot = np.cross(zeta1, b_1c)

    gamma = np.dot(b_1d, b_3c)
    a1 = np.vstack([b_1c, b_2c, (gamma / norm_w ** 2) * b_1d])
    a2 = np.array([0.0, 0.0, np.dot(b_1d_dot, b_2c) / norm_w])
    gamma_dot = np.dot(b_1d_dot, b_3c) + np.dot(b_1d, b_3c_dot)
    scale_dot = gamma_dot / norm_w ** 2 - 2.0 * gamma * np.dot(w, w_dot) / norm_w ** 4
    a1_dot = np.vstack([b_1c_dot, b_2c_dot,
                        scale_dot * b_1d + (gamma / norm_w ** 2) * b_1d_dot])
    Omega_c = a1 @ zeta3 + a2

    return CommandChain(t, e_x, e_v, e_i.copy(), sat_e_i, D_sat, A, norm_A, f,
                        b_1d, b_1d_dot, b_1c, b_2c, b_3c, R_c, A_dot,
                        zeta1, zeta2, zeta3, b_1c_dot, b_2c_dot, b_3c_dot,
                        a1, a2, a1_dot, Omega_c)


def propagate_first_order(s, ctrl, cmd, t, gains, params, h, ch=None):
    """Move (state, integrals) a signed step h along the closed-loop flow,
    to first order, for use inside central time differences.

    The quantities differentiated this way never read Omega or e_I directly,
    so those stay frozen; attitude advances on the manifold and the O(h^2)
    truncation cancels between the +h and -h branches of a central
    difference, leaving second-order accurate flow derivatives. Pass the
    command chain already evaluated at (s, ctrl, t) to skip recomputing it.
    """
    if ch is None:
        ch = command_chain(s, ctrl, cmd, t, gains, params)
    v_dot = (params.g * _E3 - (ch.f / params.m) * (s.R @ _E3)
             + params.Delta_x / params.m)
    s_h = QuadrotorState(s.x + h * s.v, s.v + h * v_dot,
                         s.R @ exp_so3(h * s.Omega), s.Omega.copy())
    ctrl_h = ControllerState(ctrl.e_i + h * (ch.e_v + gains.c1 * ch.e_x),
                             ctrl.e_I.copy())
    return s_h, ctrl_h


def compute_Omega_c(s, ctrl, cmd, t, gains, params):
    """Analytic computed angular velocity (body frame of R_c)."""
    return command_chain(s, ctrl, cmd, t, gains, params).Omega_c


def compute_Omega_c_dot(s, ctrl, cmd, t, gains, params, h=H_OMEGA, ch=None):
    """Central difference of Omega_c along the closed-loop flow."""
    sp, cp = propagate_first_order(s, ctrl, cmd, t, gains, params, h, ch=ch)
    sm, cm = propagate_first_order(s, ctrl, cmd, t, gains, params, -h, ch=ch)
    wp = command_chain(sp, cp, cmd, t + h, gains, params).Omega_c
    wm = command_chain(sm, cm, cmd, t - h, gains, params).Omega_c
    return (wp - wm) / (2.0 * h)


def control_input(s, ctrl, cmd, t, gains, params, h=H_OMEGA):
    """Full position-mode control computation at one instant.

    Returns (ControlInput, ComputedAttitude). The thrust uses the actual
    attitude, the moment tracks the computed attitude with feed-forward.
    """
    ch = command_chain(s, ctrl, cmd, t, gains, params)
    Omega_c_dot = compute_Omega_c_dot(s, ctrl, cmd, t, gains, params, h=h,
                                      ch=ch)
    M = attitude_moment(s, ch.R_c, ch.Omega_c, Omega_c_dot, ctrl.e_I,
                        gains, params.J)
    ca = ComputedAttitude(ch.R_c, ch.Omega_c, Omega_c_dot, ch.A,
                          ch.b_1c, ch.b_2c, ch.b_3c)
    return ControlInput(ch.f, M), ca
