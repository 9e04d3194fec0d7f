"""Error-state extended Kalman filter for the closed-loop quadrotor.

The mean is a FullState (position, velocity, attitude, rate, two integral
states); covariance lives in the 18-dimensional reduced space with the
attitude block as a right perturbation R exp_so3(eta). Prediction integrates
the mean along the closed-loop field (control recomputed from the mean) and
propagates P through Phi = I + A_L dt (or an exact expm); updates use
exponential-map attitude residuals and retract the mean back onto SO(3).
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .controller import ControlDegeneracyError
from .dynamics import ControlInput, rk4_step
from .geom import exp_so3, log_so3
from .linearization import (BLOCK_SLICES, FullState, assemble_A_L,
                            closed_loop_field, closed_loop_rk4_step,
                            fd_jacobian, retract)

# measured-block name -> reduced-state column block
_BLOCK_COLUMNS = {"x": BLOCK_SLICES["x"], "v": BLOCK_SLICES["v"],
                  "att": BLOCK_SLICES["eta"], "Omega": BLOCK_SLICES["Omega"],
                  "ei1": BLOCK_SLICES["ei1"], "ei2": BLOCK_SLICES["ei2"]}


class FilterNumericalError(RuntimeError):
    """Raised when the filter algebra degenerates (singular S or P)."""


def default_P0():
    """Initial covariance used when a scenario does not override it."""
    return np.diag(np.concatenate([np.full(3, 10.0), np.full(3, 10.0),
                                   np.full(3, 0.1), np.full(3, 0.1),
                                   np.full(3, 1e-2), np.full(3, 1e-2)]))


@dataclass
class Estimate:
    """Filter mean and covariance. P is symmetrized on construction and its
    spectrum must stay essentially nonnegative."""
    mean: FullState
    P: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.shape != (18, 18):
            raise ValueError("Estimate: P must be 18x18")
        self.P = 0.5 * (P + P.T)
        self.min_eigenvalue = float(np.linalg.eigvalsh(self.P)[0])
        if self.min_eigenvalue < -1e-10:
            raise FilterNumericalError(
                "Estimate: covariance lost positive semidefiniteness "
                "(min eigenvalue %.3e)" % self.min_eigenvalue)


@dataclass
class Measurement:
    """Container for one measurement; only the fields a model reads are set."""
    x: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    Omega: Optional[np.ndarray] = None
    e_i1: Optional[np.ndarray] = None
    e_i2: Optional[np.ndarray] = None


_BLOCK_FIELD = {"x": "x", "v": "v", "att": "R", "Omega": "Omega",
                "ei1": "e_i1", "ei2": "e_i2"}


@dataclass
class MeasurementModel:
    """Which state blocks a sensor suite observes, with its noise covariance.

    blocks is an ordered tuple of names from {"x","v","att","Omega","ei1",
    "ei2"}; "att" is the SO(3) component, handled through log/exp maps.
    """
    name: str
    blocks: tuple
    R_cov: np.ndarray

    def __post_init__(self):
        self.p = 3 * len(self.blocks)
        R = self.R_cov
        if np.isscalar(R):
            R = float(R) * np.eye(self.p)
        R = np.asarray(R, dtype=float)
        if R.shape != (self.p, self.p) or np.linalg.norm(R - R.T) > 1e-12:
            raise ValueError("MeasurementModel: R_cov must be symmetric pxp")
        if np.min(np.linalg.eigvalsh(R)) <= 0.0:
            raise ValueError("MeasurementModel: R_cov must be positive-definite")
        self.R_cov = R
        H = np.zeros((self.p, 18))
        for k, b in enumerate(self.blocks):
            H[3 * k:3 * k + 3, _BLOCK_COLUMNS[b]] = np.eye(3)
        self.H = H

    def h(self, state):
        """Predicted measurement of a FullState."""
        z = Measurement()
        for b in self.blocks:
            f = _BLOCK_FIELD[b]
            setattr(z, f, getattr(state, f).copy())
        return z

    def residual(self, z, state):
        """p-vector residual z (-) h(state); attitude via the log map."""
        parts = []
        for b in self.blocks:
            if b == "att":
                parts.append(log_so3(state.R.T @ z.R))
            else:
                f = _BLOCK_FIELD[b]
                parts.append(getattr(z, f) - getattr(state, f))
        return np.concatenate(parts)


def model_pos_att_gyro(R_cov=1.0):
    """Position + attitude + angular-velocity measurement (p = 9)."""
    return MeasurementModel("pos_att_gyro", ("x", "att", "Omega"), R_cov)


def model_att_gyro(R_cov=1.0):
    """Attitude + angular-velocity measurement (p = 6, no position fix)."""
    return MeasurementModel("att_gyro", ("att", "Omega"), R_cov)


def model_full(R_cov=1.0):
    """Synthetic model observing every state block (p = 18)."""
    return MeasurementModel("full", ("x", "v", "att", "Omega", "ei1", "ei2"),
                            R_cov)


@dataclass
class NoiseConfig:
    """Process noise intensity (scalar => isotropic 18x18) and rng seed."""
    Q: object = 0.01
    seed: int = 0

    def Q_matrix(self):
        if np.isscalar(self.Q):
            return float(self.Q) * np.eye(18)
        Q = np.asarray(self.Q, dtype=float)
        if Q.shape != (18, 18) or np.linalg.norm(Q - Q.T) > 1e-12:
            raise ValueError("NoiseConfig: Q must be scalar or symmetric 18x18")
        return Q


MAX_ATT_NOISE_ANGLE = 2.8  # rad; keeps noisy attitudes clear of the log cut


def sample_measurement(truth, model, rng):
    """Draw one noisy measurement of the truth state.

    Vector blocks get additive Gaussian noise from the matching diagonal
    block of R_cov; the attitude block is perturbed multiplicatively,
    R exp_so3(n). The rotation-noise angle is capped at MAX_ATT_NOISE_ANGLE
    so a single unlucky draw cannot land on the log map's cut at pi.
    """
    z = Measurement()
    for k, b in enumerate(model.blocks):
        cov = model.R_cov[3 * k:3 * k + 3, 3 * k:3 * k + 3]
        n = np.linalg.cholesky(cov) @ rng.standard_normal(3)
        if b == "att":
            ang = np.linalg.norm(n)
            if ang > MAX_ATT_NOISE_ANGLE:
                n *= MAX_ATT_NOISE_ANGLE / ang
            z.R = truth.R @ exp_so3(n)
        else:
            f = _BLOCK_FIELD[b]
            setattr(z, f, getattr(truth, f) + n)
    return z


_MAX_SUBSTEPS = 8


def _step_sane(before, after):
    # generous per-step increment bounds; a healthy closed-loop trajectory
    # stays far below these, an RK4 instability overshoots them immediately
    for f in ("x", "v", "Omega", "e_i1", "e_i2"):
        if not np.all(np.isfinite(getattr(after, f))):
            return False
    if not np.all(np.isfinite(after.R)):
        return False
    if np.linalg.norm(after.v - before.v) > 25.0 + 0.5 * np.linalg.norm(before.v):
        return False
    if np.linalg.norm(after.Omega - before.Omega) > 25.0 + np.linalg.norm(before.Omega):
        return False
    return True


def _propagate_mean(mean, cmd, t, gains, params, dt):
    """Integrate the mean one filter step along the closed-loop field.

    A single RK4 step normally. A badly-kicked mean (large noise on a large
    initial offset) can slew hard enough that the step goes unstable, or can
    skim the thrust/heading degeneracy of the attitude-command construction,
    where the commanded frame whips and the field is effectively singular.
    Unstable steps retry with finer substeps; if the field itself is the
    problem, the mean coasts this one step under the held start-of-step
    control (plain rigid-body integration, always smooth) and the filter
    re-enters closed-loop propagation at the next step. Calm states always
    take the plain single step, so an exactly initialized noise-free filter
    still shadows the plant bitwise.
    """
    n = 1
    while n <= _MAX_SUBSTEPS:
        try:
            m = mean
            h = dt / n
            for i in range(n):
                m_next = closed_loop_rk4_step(m, cmd, t + i * h, gains,
                                              params, h)
                if not _step_sane(m, m_next):
                    m = None
                    break
                m = m_next
            if m is not None:
                return m
        except (ControlDegeneracyError, ValueError, FloatingPointError):
            pass
        n *= 2

    # Field unintegrable here (the commanded frame whips near the
    # thrust/heading degeneracy and the controller output is garbage), so
    # coast this one step on nominal hover thrust with the integral states
    # frozen; the next step re-enters closed-loop propagation.
    u = ControlInput(params.m * params.g, np.zeros(3))
    qs = rk4_step(mean.quad_state(), u, params, dt, t=t)
    out = FullState(qs.x, qs.v, qs.R, qs.Omega, mean.e_i1.copy(),
                    mean.e_i2.copy())
    if not _step_sane(mean, out):
        raise FilterNumericalError(
            "predict: mean integration unstable even while coasting")
    return out


def predict(est, cmd, t, gains, params, dt, Q=None, transition="first-order",
            jacobian="analytic"):
    """Propagate the estimate over [t, t+dt] along the closed-loop field.

    The mean advances by one RK4 step with the control recomputed from the
    mean at every stage (the same autonomous field the plant flies), so a
    noise-free exactly-initialized filter shadows the truth bitwise.
    Covariance: P <- Phi P Phi^T + Q dt, with Phi = I + A_L dt by default or
    a matrix exponential when transition="exact-expm".
    """
    mean = est.mean

    if jacobian == "analytic":
        A_L = assemble_A_L(mean, cmd, t, gains, params).A_L
    elif jacobian == "fd":
        A_L = fd_jacobian(lambda ss: closed_loop_field(ss, cmd, t, gains,
                                                       params), mean)
    else:
        raise ValueError("predict: jacobian must be 'analytic' or 'fd'")

    mean_n = _propagate_mean(mean, cmd, t, gains, params, dt)

    if transition == "first-order":
        Phi = np.eye(18) + A_L * dt
    elif transition == "exact-expm":
        Phi = scipy.linalg.expm(A_L * dt)
    else:
        raise ValueError("predict: transition must be 'first-order' or "
                         "'exact-expm'")

    P = Phi @ est.P @ Phi.T
    if Q is not None:
        if isinstance(Q, NoiseConfig):
            Qm = Q.Q_matrix()
        elif np.isscalar(Q):
            Qm = float(Q) * np.eye(18)
        else:
            Qm = np.asarray(Q, float)
        P = P + Qm * dt
    return Estimate(mean_n, P)


def update(est, z, model):
    """Measurement update: Kalman gain, retraction of the mean, P = (I-KH)P.

    The reduced-state error is reset to zero implicitly (plain reset, no
    covariance reshaping beyond (I-KH)P).
    """
    resid = model.residual(z, est.mean)
    H = model.H
    S = H @ est.P @ H.T + model.R_cov
    try:
        K = np.linalg.solve(S.T, (est.P @ H.T).T).T
    except np.linalg.LinAlgError as e:
        raise FilterNumericalError("update: singular innovation covariance") from e
    if not np.all(np.isfinite(K)):
        raise FilterNumericalError("update: non-finite Kalman gain")
    delta = K @ resid
    mean_n = retract(est.mean, delta)
    P = (np.eye(18) - K @ H) @ est.P
    return Estimate(mean_n, P)


def estimation_error(est_mean, truth):
    """Reduced-coordinate error of the mean relative to the truth state."""
    return np.concatenate([
        est_mean.x - truth.x, est_mean.v - truth.v,
        log_so3(truth.R.T @ est_mean.R),
        est_mean.Omega - truth.Omega,
        est_mean.e_i1 - truth.e_i1, est_mean.e_i2 - truth.e_i2])


def nees(est, truth):
    """Normalized estimation error squared, e^T P^{-1} e."""
    e = estimation_error(est.mean, truth)
    try:
        return float(e @ np.linalg.solve(est.P, e))
    except np.linalg.LinAlgError as exc:
        raise FilterNumericalError("nees: singular covariance") from exc
