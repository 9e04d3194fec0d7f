"""Rotation-group primitives shared by the rest of the package.

Conventions: rotation matrices map body-frame vectors to the inertial frame,
the inertial z axis points down, and attitude errors follow the trace form
Psi = 0.5*tr(I - Rd^T R) with e_R = 0.5*vee(Rd^T R - R^T Rd).
"""

import numpy as np

SMALL_ANGLE = 1e-8    # below this, series expansions replace sinc-style terms
SKEW_TOL = 1e-9       # vee() rejects matrices further than this from skew
LOG_TRACE_TOL = 1e-9  # log_so3 requires trace(R) > -1 + LOG_TRACE_TOL
LOG_ANGLE_TOL = 1e-6  # log_so3 rejects rotation angles within this of pi

_E3 = np.array([0.0, 0.0, 1.0])


def hat(v):
    """Map a 3-vector to the skew-symmetric matrix S with S @ w = v x w."""
    v = np.asarray(v, dtype=float)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def vee(S):
    """Inverse of hat(). Rejects inputs that are not skew-symmetric."""
    S = np.asarray(S, dtype=float)
    if np.linalg.norm(S + S.T) > SKEW_TOL:
        raise ValueError("vee: matrix is not skew-symmetric")
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def exp_so3(eta):
    """Rodrigues exponential map from axis coordinates to a rotation matrix.

    Parameters
    ----------
    eta : array_like, shape (3,)
        Rotation vector (axis times angle, radians).

    Returns
    -------
    ndarray, shape (3, 3)
    """
    eta = np.asarray(eta, dtype=float)
    theta = np.linalg.norm(eta)
    S = hat(eta)
    if theta < SMALL_ANGLE:
        # second-order series; exact to machine precision at this magnitude
        return np.eye(3) + S + 0.5 * (S @ S)
    return np.eye(3) + (np.sin(theta) / theta) * S \
        + ((1.0 - np.cos(theta)) / theta ** 2) * (S @ S)


def log_so3(R):
    """Rotation vector of R. Rejects rotations within LOG_ANGLE_TOL of pi.

    The axis is ill-conditioned near pi, and downstream consumers (filter
    residuals) are always small, so failing loudly beats picking an axis.
    """
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr <= -1.0 + LOG_TRACE_TOL:
        raise ValueError("log_so3: rotation angle too close to pi")
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2.0
    s = np.linalg.norm(w)            # sin(theta)
    c = (tr - 1.0) / 2.0             # cos(theta)
    theta = np.arctan2(s, c)
    if theta >= np.pi - LOG_ANGLE_TOL:
        raise ValueError("log_so3: rotation angle too close to pi")
    if theta < SMALL_ANGLE:
        return w
    return (theta / s) * w


def project_so3(M):
    """Nearest rotation to M in the Frobenius sense (SVD polar factor).

    Requires det(M) > 0 and M nonsingular; used to pull integrated attitudes
    back onto the manifold.
    """
    M = np.asarray(M, dtype=float)
    if np.linalg.det(M) <= 0.0:
        raise ValueError("project_so3: determinant must be positive")
    U, s, Vt = np.linalg.svd(M)
    if s[-1] < 1e-12:
        raise ValueError("project_so3: matrix is singular")
    D = np.diag([1.0, 1.0, np.linalg.det(U @ Vt)])
    return U @ D @ Vt


def attitude_error(R, R_d):
    """Error function Psi and error vector e_R for attitude (R) vs command (R_d).

    Returns
    -------
    psi : float
        0.5 * tr(I - R_d^T R), in [0, 2].
    e_R : ndarray, shape (3,)
        0.5 * vee(R_d^T R - R^T R_d).
    """
    Q = R_d.T @ R
    psi = 0.5 * np.trace(np.eye(3) - Q)
    e_R = 0.5 * np.array([Q[2, 1] - Q[1, 2], Q[0, 2] - Q[2, 0], Q[1, 0] - Q[0, 1]])
    return psi, e_R


def angular_velocity_error(R, Omega, R_d, Omega_d):
    """e_Omega = Omega - R^T R_d Omega_d, expressed in the body frame."""
    return Omega - R.T @ (R_d @ Omega_d)


def sat(sigma, y):
    """Clamp every component of y to [-sigma, sigma]. sigma must be positive."""
    if sigma <= 0.0:
        raise ValueError("sat: sigma must be positive")
    return np.clip(np.asarray(y, dtype=float), -sigma, sigma)


def inv_right_jacobian_so3(eta):
    """Inverse of the right Jacobian of exp_so3 at eta.

    Converts a body angular velocity into the rate of the rotation-vector
    coordinate: if R(t) = R_ref exp_so3(eta(t)) then
    eta_dot = inv_right_jacobian_so3(eta) @ Omega_rel.
    """
    eta = np.asarray(eta, dtype=float)
    theta = np.linalg.norm(eta)
    S = hat(eta)
    if theta < SMALL_ANGLE:
        return np.eye(3) + 0.5 * S + (S @ S) / 12.0
    coef = 1.0 / theta ** 2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) + 0.5 * S + coef * (S @ S)
