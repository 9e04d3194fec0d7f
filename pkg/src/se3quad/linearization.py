"""Analytic linearization of the closed-loop quadrotor dynamics.

The reduced (error) state is the 18-vector
    (dx, dv, eta, dOmega, de_i1, de_i2)
where eta is the right attitude perturbation, R_perturbed = R exp_so3(eta).
assemble_A_L builds the 18x18 Jacobian of the closed loop blockwise from the
controller's command chain; fd_jacobian is an independent retraction-aware
central-difference oracle for it. Time derivatives of the attitude-loop
coefficient matrices (B5..B9) have no closed form and are obtained by central
differencing along the closed-loop flow, matching how Omega_c_dot is built.
"""

from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from .controller import (command_chain, compute_Omega_c_dot, control_input,
                         integral_rates, propagate_first_order,
                         tracking_errors)
from .dynamics import state_derivative
from .geom import (attitude_error, angular_velocity_error, exp_so3, hat,
                   inv_right_jacobian_so3, log_so3, project_so3)

H_B = 1e-4       # step for the B-matrix flow derivatives
H_FD = 1e-6      # default step of the finite-difference oracle

BLOCK_NAMES = ("x", "v", "eta", "Omega", "ei1", "ei2")
BLOCK_SLICES = {name: slice(3 * i, 3 * i + 3) for i, name in enumerate(BLOCK_NAMES)}


@dataclass
class FullState:
    """Plant state plus controller integral states (the filter's mean)."""
    x: np.ndarray
    v: np.ndarray
    R: np.ndarray
    Omega: np.ndarray
    e_i1: np.ndarray
    e_i2: np.ndarray

    def __post_init__(self):
        for name in ("x", "v", "Omega", "e_i1", "e_i2"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.R = np.asarray(self.R, dtype=float)

    @staticmethod
    def from_parts(s, ctrl):
        return FullState(s.x.copy(), s.v.copy(), s.R.copy(), s.Omega.copy(),
                         ctrl.e_i.copy(), ctrl.e_I.copy())

    def quad_state(self):
        from .dynamics import QuadrotorState
        return QuadrotorState(self.x.copy(), self.v.copy(),
                              self.R.copy(), self.Omega.copy())

    def controller_state(self):
        from .controller import ControllerState
        return ControllerState(self.e_i1.copy(), self.e_i2.copy())

    def copy(self):
        return FullState(self.x.copy(), self.v.copy(), self.R.copy(),
                         self.Omega.copy(), self.e_i1.copy(), self.e_i2.copy())


class ReducedState:
    """Thin view over an 18-vector in the reduced-state block layout."""

    def __init__(self, vec=None):
        self.vec = np.zeros(18) if vec is None else np.asarray(vec, dtype=float)
        if self.vec.shape != (18,):
            raise ValueError("ReducedState: expected an 18-vector")

    def block(self, name):
        return self.vec[BLOCK_SLICES[name]]


@dataclass
class FullStateTangent:
    x_dot: np.ndarray
    v_dot: np.ndarray
    R_dot: np.ndarray
    Omega_dot: np.ndarray
    e_i1_dot: np.ndarray
    e_i2_dot: np.ndarray


@dataclass
class LinearizedSystem:
    """18x18 closed-loop Jacobian with named 3x3 block accessors."""
    A_L: np.ndarray

    def block(self, i, j):
        # 1-indexed to mirror the m_ij naming
        return self.A_L[3 * (i - 1):3 * i, 3 * (j - 1):3 * j]

    @property
    def m_21(self):
        return self.block(2, 1)

    @property
    def m_22(self):
        return self.block(2, 2)

    @property
    def m_23(self):
        return self.block(2, 3)

    @property
    def m_24(self):
        return self.block(2, 5)

    @property
    def m_41(self):
        return self.block(4, 1)

    @property
    def m_42(self):
        return self.block(4, 2)

    @property
    def m_43(self):
        return self.block(4, 3)

    @property
    def m_44(self):
        return self.block(4, 4)

    @property
    def m_45(self):
        return self.block(4, 5)

    @property
    def m_46(self):
        return self.block(4, 6)

    @property
    def m_61(self):
        return self.block(6, 1)

    @property
    def m_62(self):
        return self.block(6, 2)

    @property
    def m_63(self):
        return self.block(6, 3)

    @property
    def m_64(self):
        return self.block(6, 4)

    @property
    def m_65(self):
        return self.block(6, 5)


def retract(s, delta):
    """Apply a reduced-state increment to a FullState.

    Vector blocks add; the attitude block retracts on the manifold,
    R <- R exp_so3(eta).
    """
    d = np.asarray(delta, dtype=float)
    return FullState(s.x + d[0:3], s.v + d[3:6], s.R @ exp_so3(d[6:9]),
                     s.Omega + d[9:12], s.e_i1 + d[12:15], s.e_i2 + d[15:18])


def _field_and_control(s, cmd, t, gains, params):
    """Closed-loop state rate together with the control that produced it."""
    qs = s.quad_state()
    ctrl = s.controller_state()
    u, ca = control_input(qs, ctrl, cmd, t, gains, params)
    ds = state_derivative(qs, u, params)
    e_x, e_v = tracking_errors(qs, cmd, t)
    _, e_R = attitude_error(qs.R, ca.R_c)
    e_Om = angular_velocity_error(qs.R, qs.Omega, ca.R_c, ca.Omega_c)
    e_i1_dot, e_i2_dot = integral_rates(e_x, e_v, e_R, e_Om, gains)
    tangent = FullStateTangent(ds.x_dot, ds.v_dot, ds.R_dot, ds.Omega_dot,
                               e_i1_dot, e_i2_dot)
    return tangent, u, ca


def closed_loop_field(s, cmd, t, gains, params):
    """Time derivative of the full state under the tracking controller.

    Control is recomputed from the given state (no hold), so this is the
    autonomous vector field whose Jacobian assemble_A_L approximates.
    """
    tangent, _, _ = _field_and_control(s, cmd, t, gains, params)
    return tangent


def closed_loop_rk4_step(s, cmd, t, gains, params, dt, return_control=False):
    """Advance a FullState by one classical RK4 step of the closed-loop field.

    The control is recomputed at every stage from the stage state, so this
    integrates the autonomous system the linearization describes. The
    attitude block rides through the stages as an embedded 3x3 matrix and is
    projected back onto the rotation group once at the end, matching the
    plant integrator's convention. With return_control the first stage's
    (ControlInput, ComputedAttitude) comes back too.
    """
    if dt <= 0.0:
        raise ValueError("closed_loop_rk4_step: dt must be positive")

    def advance(state, k, h):
        return FullState(state.x + h * k.x_dot, state.v + h * k.v_dot,
                         state.R + h * k.R_dot, state.Omega + h * k.Omega_dot,
                         state.e_i1 + h * k.e_i1_dot,
                         state.e_i2 + h * k.e_i2_dot)

    k1, u1, ca1 = _field_and_control(s, cmd, t, gains, params)
    k2 = closed_loop_field(advance(s, k1, dt / 2), cmd, t + dt / 2, gains,
                           params)
    k3 = closed_loop_field(advance(s, k2, dt / 2), cmd, t + dt / 2, gains,
                           params)
    k4 = closed_loop_field(advance(s, k3, dt), cmd, t + dt, gains, params)

    c = dt / 6.0
    out = FullState(
        s.x + c * (k1.x_dot + 2 * k2.x_dot + 2 * k3.x_dot + k4.x_dot),
        s.v + c * (k1.v_dot + 2 * k2.v_dot + 2 * k3.v_dot + k4.v_dot),
        project_so3(s.R + c * (k1.R_dot + 2 * k2.R_dot + 2 * k3.R_dot
                               + k4.R_dot)),
        s.Omega + c * (k1.Omega_dot + 2 * k2.Omega_dot + 2 * k3.Omega_dot
                       + k4.Omega_dot),
        s.e_i1 + c * (k1.e_i1_dot + 2 * k2.e_i1_dot + 2 * k3.e_i1_dot
                      + k4.e_i1_dot),
        s.e_i2 + c * (k1.e_i2_dot + 2 * k2.e_i2_dot + 2 * k3.e_i2_dot
                      + k4.e_i2_dot))
    if return_control:
        return out, u1, ca1
    return out


def _reduced_rates(tangent, s_pert, s_ref):
    """Convert a FullState tangent at a perturbed state into reduced-state
    rates relative to the reference state.

    The attitude row is kinematic: with eta = log(R_ref^T R_pert),
    eta_dot = Jr_inv(eta) (Omega_pert - exp(-eta) Omega_ref), the rate of the
    attitude error coordinate between the two closed-loop solutions.
    """
    eta = log_so3(s_ref.R.T @ s_pert.R)
    eta_dot = inv_right_jacobian_so3(eta) @ (
        s_pert.Omega - exp_so3(-eta) @ s_ref.Omega)
    return np.concatenate([tangent.x_dot, tangent.v_dot, eta_dot,
                           tangent.Omega_dot, tangent.e_i1_dot,
                           tangent.e_i2_dot])


def fd_jacobian(field, s, h=H_FD):
    """Central-difference Jacobian of a FullState field in reduced coordinates.

    field: callable FullState -> FullStateTangent. Each coordinate j is
    perturbed through retract(s, +/- h e_j); the eta rows of the two
    evaluations come from the kinematic conversion in _reduced_rates.
    """
    if h <= 0.0:
        raise ValueError("fd_jacobian: h must be positive")
    A = np.zeros((18, 18))
    for j in range(18):
        dv = np.zeros(18)
        dv[j] = h
        sp = retract(s, dv)
        sm = retract(s, -dv)
        rp = _reduced_rates(field(sp), sp, s)
        rm = _reduced_rates(field(sm), sm, s)
        A[:, j] = (rp - rm) / (2.0 * h)
    return A


def _coefficient_blocks(ch, R, gains, params):
    """Position-loop coefficient matrices at one instant of the chain.

    These are the pieces of the variations of v_dot (m_2j), of the computed
    attitude (Y_j), and of eta_d_dot (B_1..B_9), all expressed with the
    actual attitude R and the chain's command quantities.
    """
    m = params.m
    Re3 = R[:, 2]
    P3 = np.outer(Re3, Re3)
    Rhat3 = R @ hat(np.array([0.0, 0.0, 1.0]))
    D = ch.D_sat
    m21 = -(gains.k_x / m) * P3
    m22 = -(gains.k_v / m) * P3
    m23 = -(np.outer(Re3, ch.A @ Rhat3) + np.dot(ch.A, Re3) * Rhat3) / m
    m24 = -(gains.k_i / m) * (P3 @ D)

    hb3 = hat(ch.b_3c)
    X2 = -hb3 / ch.norm_A
    X1 = (-hat(ch.b_3c_dot) / ch.norm_A
          + hb3 * (np.dot(ch.A, ch.A_dot) / ch.norm_A ** 3))
    a1X2 = ch.a1 @ X2
    Y1 = -gains.k_x * a1X2
    Y2 = -gains.k_v * a1X2
    Y3 = -gains.k_i * (a1X2 @ D)

    B1 = -gains.k_x * X1 - gains.k_v * (X2 @ m21) - gains.c1 * gains.k_i * (X2 @ D)
    B2 = (-gains.k_v * X1 - X2 @ (gains.k_x * np.eye(3) + gains.k_i * D)
          - gains.k_v * (X2 @ m22))
    B3 = -gains.k_v * (X2 @ m23)
    B4 = -gains.k_i * (X1 @ D) - gains.k_v * (X2 @ m24)
    adX2 = ch.a1_dot @ X2
    B5 = -gains.k_x * adX2 + ch.a1 @ B1
    B6 = -gains.k_v * adX2 + ch.a1 @ B2
    B7 = ch.a1 @ B3
    B8 = -gains.k_i * (adX2 @ D) + ch.a1 @ B4
    B9 = -hat(ch.Omega_c) @ a1X2

    return SimpleNamespace(m21=m21, m22=m22, m23=m23, m24=m24,
                           X1=X1, X2=X2, Y1=Y1, Y2=Y2, Y3=Y3,
                           B1=B1, B2=B2, B3=B3, B4=B4, B5=B5,
                           B6=B6, B7=B7, B8=B8, B9=B9, D=D)


def assemble_A_L(s, cmd, t, gains, params, h_B=H_B):
    """Analytic 18x18 Jacobian of the closed loop at (s, t).

    Blocks follow the variational expansion of each state rate; the flow
    derivatives of B5..B9 are central differences over +/- h_B along the
    closed loop. Raises the controller degeneracy errors where the computed
    attitude is undefined.
    """
    qs = s.quad_state()
    ctrl = s.controller_state()
    ch = command_chain(qs, ctrl, cmd, t, gains, params)
    bl = _coefficient_blocks(ch, qs.R, gains, params)

    sp, cp = propagate_first_order(qs, ctrl, cmd, t, gains, params, h_B,
                                   ch=ch)
    sm, cm = propagate_first_order(qs, ctrl, cmd, t, gains, params, -h_B,
                                   ch=ch)
    blp = _coefficient_blocks(command_chain(sp, cp, cmd, t + h_B, gains, params),
                              sp.R, gains, params)
    blm = _coefficient_blocks(command_chain(sm, cm, cmd, t - h_B, gains, params),
                              sm.R, gains, params)
    B5d = (blp.B5 - blm.B5) / (2.0 * h_B)
    B6d = (blp.B6 - blm.B6) / (2.0 * h_B)
    B7d = (blp.B7 - blm.B7) / (2.0 * h_B)
    B8d = (blp.B8 - blm.B8) / (2.0 * h_B)
    B9d = (blp.B9 - blm.B9) / (2.0 * h_B)

    Om_d = ch.Omega_c
    Om_d_dot = compute_Omega_c_dot(qs, ctrl, cmd, t, gains, params, ch=ch)
    R = qs.R
    J = params.J
    Jinv = params.J_inv
    I3 = np.eye(3)

    G3 = R.T @ ch.R_c
    W = G3 @ Om_d
    G1 = hat(W)
    G2 = G3 @ hat(Om_d)
    trG3 = np.trace(G3)
    G4 = 0.5 * (trG3 * I3 - G3)
    G5 = 0.5 * (trG3 * I3 - G3.T)

    JW = J @ W
    B10 = Jinv @ (-gains.k_R * G4 + gains.k_Omega * G1 - hat(JW) @ G1
                  + G1 @ J @ G1 + J @ hat(G3 @ Om_d_dot))
    B11 = Jinv @ (gains.k_R * G5 - gains.k_Omega * G2 + hat(JW) @ G2
                  - G1 @ J @ G2 - J @ G3 @ hat(Om_d_dot))
    B12 = Jinv @ (-gains.k_Omega * I3 + hat(J @ qs.Omega) - hat(qs.Omega) @ J)
    B13 = Jinv @ (gains.k_Omega * G3 - hat(JW) @ G3 + G1 @ J @ G3)
    B14 = G3

    # coefficients of delta Omega_d in (dx, dv, eta, de_i1)
    C5 = bl.B5 + gains.k_x * bl.B9
    C6 = bl.B6 + gains.k_v * bl.B9
    C8 = bl.B8 + gains.k_i * (bl.B9 @ bl.D)

    F1 = B5d + gains.k_x * B9d + C6 @ bl.m21 + gains.c1 * C8
    F2 = C5 + B6d + gains.k_v * B9d + C6 @ bl.m22 + C8
    F3 = C6 @ bl.m23 + B7d - bl.B7 @ hat(qs.Omega)
    F4 = B8d + gains.k_i * (B9d @ bl.D) + C6 @ bl.m24

    A = np.zeros((18, 18))

    def put(i, j, blk):
        A[3 * (i - 1):3 * i, 3 * (j - 1):3 * j] = blk

    put(1, 2, I3)

    put(2, 1, bl.m21)
    put(2, 2, bl.m22)
    put(2, 3, bl.m23)
    put(2, 5, bl.m24)

    put(3, 3, -hat(qs.Omega))
    put(3, 4, I3)

    put(4, 1, B11 @ bl.Y1 + B13 @ C5 + B14 @ F1)
    put(4, 2, B11 @ bl.Y2 + B13 @ C6 + B14 @ F2)
    put(4, 3, B10 + B13 @ bl.B7 + B14 @ F3)
    put(4, 4, B12 + B14 @ bl.B7)
    put(4, 5, B11 @ bl.Y3 + B13 @ C8 + B14 @ F4)
    put(4, 6, -gains.k_I * Jinv)

    put(5, 1, gains.c1 * I3)
    put(5, 2, I3)

    put(6, 1, G2 @ bl.Y1 - G3 @ C5 - gains.c2 * (G5 @ bl.Y1))
    put(6, 2, G2 @ bl.Y2 - G3 @ C6 - gains.c2 * (G5 @ bl.Y2))
    put(6, 3, gains.c2 * G4 - G1 - G3 @ bl.B7)
    put(6, 4, I3)
    put(6, 5, G2 @ bl.Y3 - G3 @ C8 - gains.c2 * (G5 @ bl.Y3))

    return LinearizedSystem(A)


def block_errors(A_analytic, A_fd):
    """Relative Frobenius error of every 3x3 block, keyed 'rowvar/colvar'.

    The denominator of each block uses the FD matrix but is floored at 1% of
    its row norm so structurally-zero blocks are judged against the scale of
    the row they live in rather than against zero.
    """
    errs = {}
    for i, rname in enumerate(BLOCK_NAMES):
        row_fd = A_fd[3 * i:3 * i + 3, :]
        row_scale = 0.01 * np.linalg.norm(row_fd)
        for j, cname in enumerate(BLOCK_NAMES):
            fd_blk = A_fd[3 * i:3 * i + 3, 3 * j:3 * j + 3]
            an_blk = A_analytic[3 * i:3 * i + 3, 3 * j:3 * j + 3]
            denom = max(np.linalg.norm(fd_blk), row_scale, 1e-12)
            errs["%s/%s" % (rname, cname)] = np.linalg.norm(an_blk - fd_blk) / denom
    return errs


def deviation_report(A_analytic, A_fd, state_id="", tol=1e-3):
    """Blocks whose relative error exceeds tol, as machine-readable records."""
    out = []
    for name, rel in block_errors(A_analytic, A_fd).items():
        if rel > tol:
            out.append({"block": name, "state_id": state_id,
                        "relative_error": rel})
    return out
