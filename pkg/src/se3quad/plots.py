"""Run-report figures rendered from telemetry rows.

Each function takes the column list and the row array a RunResult (or a
loaded CSV) provides and writes one PNG next to the delimited output.
"""

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .geom import log_so3

_R_NAMES = [f"R{i}{j}" for i in range(1, 4) for j in range(1, 4)]


def _cols(rows, columns, names):
    return rows[:, [columns.index(n) for n in names]]


def plot_tracking(columns, rows, path):
    """Truth, desired, and estimated position per axis."""
    t = rows[:, columns.index("t")]
    truth = _cols(rows, columns, [f"truth.x{i}" for i in (1, 2, 3)])
    des = _cols(rows, columns, [f"desired.x{i}" for i in (1, 2, 3)])
    est = _cols(rows, columns, [f"est.x{i}" for i in (1, 2, 3)])

    fig, axes = plt.subplots(3, 1, figsize=(7, 7), sharex=True)
    for i, ax in enumerate(axes):
        ax.plot(t, des[:, i], "k--", lw=1, label="desired")
        ax.plot(t, truth[:, i], "b-", lw=1.2, label="truth")
        ax.plot(t, est[:, i], "r-", lw=0.8, alpha=0.8, label="estimate")
        ax.set_ylabel("x%d [m]" % (i + 1))
        ax.grid(True, alpha=0.3)
    axes[0].legend(loc="upper right", fontsize=8)
    axes[2].set_xlabel("t [s]")
    fig.suptitle("position tracking")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_estimation_error(columns, rows, path):
    """Norms of the estimation errors (estimate vs truth) on a log scale."""
    t = rows[:, columns.index("t")]
    ex = (_cols(rows, columns, [f"est.x{i}" for i in (1, 2, 3)])
          - _cols(rows, columns, [f"truth.x{i}" for i in (1, 2, 3)]))
    ev = (_cols(rows, columns, [f"est.v{i}" for i in (1, 2, 3)])
          - _cols(rows, columns, [f"truth.v{i}" for i in (1, 2, 3)]))
    Rt = _cols(rows, columns, [f"truth.{n}" for n in _R_NAMES]).reshape(-1, 3, 3)
    Re = _cols(rows, columns, [f"est.{n}" for n in _R_NAMES]).reshape(-1, 3, 3)
    eatt = np.array([np.linalg.norm(log_so3(a.T @ b)) for a, b in zip(Rt, Re)])

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.semilogy(t, np.linalg.norm(ex, axis=1) + 1e-16, label="position [m]")
    ax.semilogy(t, np.linalg.norm(ev, axis=1) + 1e-16, label="velocity [m/s]")
    ax.semilogy(t, eatt + 1e-16, label="attitude [rad]")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("estimation error norm")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_attitude(columns, rows, path):
    """Attitude tracking: the error function and the error vector norms."""
    t = rows[:, columns.index("t")]
    psi = rows[:, columns.index("Psi")]
    e_R = rows[:, columns.index("e_R_norm")]
    e_Om = rows[:, columns.index("e_Omega_norm")]

    fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    axes[0].plot(t, psi, "b-", lw=1)
    axes[0].set_ylabel("Psi")
    axes[0].grid(True, alpha=0.3)
    axes[1].plot(t, e_R, label="||e_R||")
    axes[1].plot(t, e_Om, label="||e_Omega||")
    axes[1].set_ylabel("attitude errors")
    axes[1].set_xlabel("t [s]")
    axes[1].grid(True, alpha=0.3)
    axes[1].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_nees(columns, rows, path):
    """Filter consistency: NEES with the chi-square 18-dof 95% band."""
    from scipy.stats import chi2
    t = rows[:, columns.index("t")]
    vals = rows[:, columns.index("nees")]
    lo, hi = chi2.ppf([0.025, 0.975], df=18)

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.semilogy(t, np.maximum(vals, 1e-12), "b-", lw=0.9, label="NEES")
    ax.axhline(lo, color="k", ls="--", lw=0.8)
    ax.axhline(hi, color="k", ls="--", lw=0.8,
               label="chi2(18) 95% band")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("NEES")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_report(columns, rows, stem):
    """All report figures next to the CSV; returns the file list."""
    files = []
    for name, fn in (("tracking", plot_tracking),
                     ("estimation", plot_estimation_error),
                     ("attitude", plot_attitude),
                     ("nees", plot_nees)):
        path = "%s_%s.png" % (stem, name)
        fn(columns, rows, path)
        files.append(path)
    return files
