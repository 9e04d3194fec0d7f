"""Scenario definitions, the closed-loop simulation runner, telemetry, and
flat-file configuration.

Loop order per step: sample measurement -> filter update -> control from the
estimate (or truth) -> plant RK4 step -> filter predict. The control is held
over the step (zero-order hold) for both the plant and the filter mean, so a
noise-free, exactly-initialized filter shadows the truth bitwise up to
rounding.
"""

import io
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .controller import (ControlDegeneracyError, ControllerState, Gains,
                         TrajectoryCommand, control_input, integral_rates,
                         tracking_errors)
from .dynamics import QuadrotorParams, QuadrotorState, rk4_step
from .estimator import (Estimate, FilterNumericalError, NoiseConfig,
                        default_P0, model_att_gyro, model_full,
                        model_pos_att_gyro, nees, sample_measurement, update,
                        predict)
from .geom import attitude_error, angular_velocity_error, exp_so3, log_so3
from .linearization import (FullState, assemble_A_L, block_errors,
                            closed_loop_field, closed_loop_rk4_step,
                            fd_jacobian)


class ConfigError(ValueError):
    """Malformed or unknown configuration input."""


# ---------------------------------------------------------------------------
# trajectories

def _lissajous_command(depth):
    def x_d(t):
        return np.array([math.sin(t) + math.pi / 2, math.sin(2 * t), depth])

    def x_d_dot(t):
        return np.array([math.cos(t), 2 * math.cos(2 * t), 0.0])

    def x_d_ddot(t):
        return np.array([-math.sin(t), -4 * math.sin(2 * t), 0.0])

    def x_d_dddot(t):
        return np.array([-math.cos(t), -8 * math.cos(2 * t), 0.0])

    return TrajectoryCommand(
        x_d, x_d_dot, x_d_ddot,
        b_1d=lambda t: np.array([1.0, 0.0, 0.0]),
        b_1d_dot=lambda t: np.zeros(3),
        x_d_dddot=x_d_dddot)


def _helix_command(a=0.4, b=0.6, w=math.pi):
    def x_d(t):
        return np.array([0.4 * t, a * math.sin(w * t), -b * math.cos(w * t)])

    def x_d_dot(t):
        return np.array([0.4, a * w * math.cos(w * t), b * w * math.sin(w * t)])

    def x_d_ddot(t):
        return np.array([0.0, -a * w ** 2 * math.sin(w * t),
                         b * w ** 2 * math.cos(w * t)])

    def x_d_dddot(t):
        return np.array([0.0, -a * w ** 3 * math.cos(w * t),
                         -b * w ** 3 * math.sin(w * t)])

    return TrajectoryCommand(
        x_d, x_d_dot, x_d_ddot,
        b_1d=lambda t: np.array([math.cos(w * t), math.sin(w * t), 0.0]),
        b_1d_dot=lambda t: np.array([-w * math.sin(w * t),
                                     w * math.cos(w * t), 0.0]),
        x_d_dddot=x_d_dddot)


TRAJECTORIES = {
    "lissajous_low": lambda: _lissajous_command(-0.5),
    "lissajous_high": lambda: _lissajous_command(-0.3),
    "helix": lambda: _helix_command(),
}

# ---------------------------------------------------------------------------
# configuration


@dataclass
class ScenarioConfig:
    name: str
    trajectory: str
    duration: float = 10.0
    dt: float = 0.01
    seed: int = 0
    gains: Gains = None
    params: QuadrotorParams = None
    model: str = "pos_att_gyro"
    R_meas: float = 1.0
    Q_proc: float = 0.01
    feedback: str = "truth"             # or "estimate" (zero-order hold)
    measurement_noise: bool = True
    truth_process_noise: bool = False
    transition: str = "first-order"
    jacobian: str = "analytic"
    jacobian_deviation: bool = False
    x0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R0: np.ndarray = field(default_factory=lambda: np.eye(3))
    Omega0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    est_x0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    est_v0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    est_R0: np.ndarray = field(default_factory=lambda: np.eye(3))
    est_Omega0: np.ndarray = field(
        default_factory=lambda: np.array([0.1, -0.2, 0.1]))
    P0_diag: np.ndarray = field(
        default_factory=lambda: np.diag(default_P0()).copy())
    out: Optional[str] = None
    window_start: Optional[float] = None
    settle_value: Optional[float] = None
    settle_time: Optional[float] = None
    max_err_x: Optional[float] = None
    max_err_v: Optional[float] = None

    def __post_init__(self):
        if self.duration <= 0.0 or self.dt <= 0.0:
            raise ConfigError("duration and dt must be positive")
        if self.trajectory not in TRAJECTORIES:
            raise ConfigError("unknown trajectory %r" % self.trajectory)
        if self.model not in MEASUREMENT_MODELS:
            raise ConfigError("unknown measurement model %r" % self.model)
        if self.feedback not in ("estimate", "truth"):
            raise ConfigError("feedback must be 'estimate' or 'truth'")
        for name in ("x0", "v0", "Omega0", "est_x0", "est_v0", "est_Omega0"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.R0 = np.asarray(self.R0, dtype=float)
        self.est_R0 = np.asarray(self.est_R0, dtype=float)
        self.P0_diag = np.asarray(self.P0_diag, dtype=float)

    def command(self):
        return TRAJECTORIES[self.trajectory]()

    def measurement_model(self):
        return MEASUREMENT_MODELS[self.model](self.R_meas)


MEASUREMENT_MODELS = {
    "pos_att_gyro": model_pos_att_gyro,
    "att_gyro": model_att_gyro,
    "full": model_full,
}


def _sim_params():
    """Vehicle constants and disturbances shared by the bundled scenarios."""
    return QuadrotorParams(
        m=0.755, J=np.diag([0.557e-2, 0.557e-2, 1.05e-2]),
        Delta_x=np.array([-0.02, 0.01, -0.03]),
        Delta_R=np.array([0.01, -0.02, 0.01]))


def _sim_gains():
    return Gains(k_x=13.84, k_v=4.84, k_R=0.67, k_Omega=0.11, k_I=0.01)


def scenario_example1():
    """Lissajous tracking with position+attitude+rate measurements and a
    large initial estimate offset in position and velocity."""
    return ScenarioConfig(
        name="example1", trajectory="lissajous_low",
        gains=_sim_gains(), params=_sim_params(),
        model="pos_att_gyro", R_meas=1.0, Q_proc=0.01,
        est_x0=np.array([4.0, 4.0, -3.0]), est_v0=np.array([4.0, 4.0, -3.0]),
        settle_value=0.2, settle_time=2.0)


def scenario_example2():
    """Helical climb with attitude+rate measurements only (no position fix)."""
    return ScenarioConfig(
        name="example2", trajectory="helix",
        gains=_sim_gains(), params=_sim_params(),
        model="att_gyro", R_meas=0.1, Q_proc=0.001,
        est_x0=np.array([0.2, -0.5, -0.5]), est_v0=np.array([0.1, -0.1, -0.1]),
        window_start=2.0, max_err_x=1.0, max_err_v=0.5)


def scenario_experiment_replay():
    """Simulated stand-in for the hardware flight: softer gains, higher
    altitude Lissajous, position+attitude+rate measurements."""
    return ScenarioConfig(
        name="experiment_replay", trajectory="lissajous_high",
        gains=Gains(k_x=4.0, k_v=2.0, k_R=0.62, k_Omega=0.15, k_I=0.1),
        params=_sim_params(),
        model="pos_att_gyro", R_meas=0.1, Q_proc=0.001)


SCENARIOS = {
    "example1": scenario_example1,
    "example2": scenario_example2,
    "experiment_replay": scenario_experiment_replay,
}

# ---------------------------------------------------------------------------
# telemetry


_R_NAMES = [f"R{i}{j}" for i in range(1, 4) for j in range(1, 4)]


def _state_columns(prefix):
    cols = [f"{prefix}.x{i}" for i in (1, 2, 3)]
    cols += [f"{prefix}.v{i}" for i in (1, 2, 3)]
    cols += [f"{prefix}.{n}" for n in _R_NAMES]
    cols += [f"{prefix}.Omega{i}" for i in (1, 2, 3)]
    return cols


def telemetry_columns(model, jacobian_deviation=False):
    cols = ["t"]
    cols += _state_columns("truth")
    cols += _state_columns("est")
    cols += [f"desired.x{i}" for i in (1, 2, 3)]
    cols += [f"desired.v{i}" for i in (1, 2, 3)]
    cols += [f"desired.{n}" for n in _R_NAMES]
    for b in model.blocks:
        if b == "att":
            cols += [f"meas.{n}" for n in _R_NAMES]
        elif b == "x":
            cols += [f"meas.x{i}" for i in (1, 2, 3)]
        elif b == "Omega":
            cols += [f"meas.Omega{i}" for i in (1, 2, 3)]
        elif b == "v":
            cols += [f"meas.v{i}" for i in (1, 2, 3)]
        elif b == "ei1":
            cols += [f"meas.ei1_{i}" for i in (1, 2, 3)]
        elif b == "ei2":
            cols += [f"meas.ei2_{i}" for i in (1, 2, 3)]
    cols += [f"ebar_x{i}" for i in (1, 2, 3)]
    cols += [f"ebar_v{i}" for i in (1, 2, 3)]
    cols += ["Psi", "e_R_norm", "e_Omega_norm", "nees"]
    if jacobian_deviation:
        cols.append("jac_dev")
    return cols


def _flat_state(s):
    return ([*s.x, *s.v, *s.R.reshape(-1), *s.Omega])


@dataclass
class TelemetryRecord:
    """One row of run telemetry, already flattened to column values."""
    values: list

    def as_dict(self, columns):
        return dict(zip(columns, self.values))


@dataclass
class Metrics:
    """Run summary; every field is recomputable from the telemetry CSV."""
    window_start: float
    window_end: float
    rmse_x: float
    rmse_v: float
    rmse_att: float
    rmse_Omega: float
    max_err_x: float
    max_err_v: float
    convergence_time: float   # first t with ||est x - truth x|| < settle value
    settle_value: float


@dataclass
class RunResult:
    config: ScenarioConfig
    columns: list
    records: list
    metrics: Optional[Metrics]
    status: str                 # ok | threshold_failure | degenerate
    abort_message: Optional[str] = None
    min_P_eigenvalue: float = float("inf")


def _record(columns, t, truth, est_mean, cmd, ca, z, model, nees_val,
            jac_dev=None):
    x_d = np.asarray(cmd.x_d(t), dtype=float)
    v_d = np.asarray(cmd.x_d_dot(t), dtype=float)
    psi, e_R = attitude_error(truth.R, ca.R_c)
    e_Om = angular_velocity_error(truth.R, truth.Omega, ca.R_c, ca.Omega_c)
    vals = [t]
    vals += _flat_state(truth)
    vals += _flat_state(est_mean)
    vals += [*x_d, *v_d, *ca.R_c.reshape(-1)]
    for b in model.blocks:
        if b == "att":
            vals += [*z.R.reshape(-1)]
        else:
            fieldname = {"x": "x", "v": "v", "Omega": "Omega",
                         "ei1": "e_i1", "ei2": "e_i2"}[b]
            vals += [*getattr(z, fieldname)]
    vals += [*(est_mean.x - x_d)]
    vals += [*(est_mean.v - v_d)]
    vals += [psi, float(np.linalg.norm(e_R)), float(np.linalg.norm(e_Om)),
             nees_val]
    if jac_dev is not None:
        vals.append(jac_dev)
    return TelemetryRecord(vals)


def run(config):
    """Simulate one scenario; returns RunResult with telemetry and metrics.

    Per step: sample the measurement, update the filter, compute the control
    from the feedback source, advance the plant, predict the filter. With
    feedback="truth" (the default, and how the reference scenarios were
    produced) the plant integrates the closed-loop field from its own state
    and the filter is a pure observer; feedback="estimate" holds the control
    computed from the post-update mean over the step instead.

    Telemetry rows carry the a-priori estimate at each t (the prediction
    before that step's measurement is applied), so the first row shows the
    configured initial estimate. A controller degeneracy mid-run aborts the
    simulation: the telemetry collected so far is kept and the result
    carries the diagnostic.
    """
    cmd = config.command()
    model = config.measurement_model()
    gains = config.gains
    params = config.params
    dt = config.dt
    n_steps = int(round(config.duration / dt))
    rng = np.random.default_rng(config.seed)
    noise = NoiseConfig(Q=config.Q_proc, seed=config.seed)

    truth = FullState(config.x0, config.v0, config.R0, config.Omega0,
                      np.zeros(3), np.zeros(3))
    est = Estimate(FullState(config.est_x0, config.est_v0, config.est_R0,
                             config.est_Omega0, np.zeros(3), np.zeros(3)),
                   np.diag(config.P0_diag))

    columns = telemetry_columns(model, config.jacobian_deviation)
    records = []
    min_eig = float("inf")
    status = "ok"
    abort_message = None

    for k in range(n_steps + 1):
        t = k * dt
        try:
            if config.measurement_noise:
                z = sample_measurement(truth, model, rng)
            else:
                z = model.h(truth)
            prior_mean = est.mean
            prior_nees = nees(est, truth)
            est = update(est, z, model)
            min_eig = min(min_eig, est.min_eigenvalue)

            truth_next = None
            if config.feedback == "truth":
                if k < n_steps:
                    truth_next, u, ca = closed_loop_rk4_step(
                        truth, cmd, t, gains, params, dt, return_control=True)
                else:
                    u, ca = control_input(truth.quad_state(),
                                          truth.controller_state(),
                                          cmd, t, gains, params)
            else:
                fb = est.mean
                u, ca = control_input(fb.quad_state(), fb.controller_state(),
                                      cmd, t, gains, params)

            jac_dev = None
            if config.jacobian_deviation:
                fb = truth if config.feedback == "truth" else est.mean
                A_an = assemble_A_L(fb, cmd, t, gains, params).A_L
                A_fd = fd_jacobian(
                    lambda ss: closed_loop_field(ss, cmd, t, gains, params), fb)
                jac_dev = max(block_errors(A_an, A_fd).values())

            records.append(_record(columns, t, truth, prior_mean, cmd, ca, z,
                                   model, prior_nees, jac_dev))
            if k == n_steps:
                break

            if config.feedback == "truth":
                truth = truth_next
            else:
                # held control; the plant's integral records still advance
                # with its own tracking errors against the held command
                def extras_rate(t_s, s_s, _ex):
                    e_x, e_v = tracking_errors(s_s, cmd, t_s)
                    _, e_R = attitude_error(s_s.R, ca.R_c)
                    e_Om = angular_velocity_error(s_s.R, s_s.Omega,
                                                  ca.R_c, ca.Omega_c)
                    r1, r2 = integral_rates(e_x, e_v, e_R, e_Om, gains)
                    return np.concatenate([r1, r2])

                qs_n, ex_n = rk4_step(truth.quad_state(), u, params, dt, t=t,
                                      extras=np.concatenate([truth.e_i1,
                                                             truth.e_i2]),
                                      extras_rate=extras_rate)
                truth = FullState(qs_n.x, qs_n.v, qs_n.R, qs_n.Omega,
                                  ex_n[:3], ex_n[3:6])

            if config.truth_process_noise:
                w = rng.standard_normal(6) * math.sqrt(config.Q_proc * dt)
                truth.v = truth.v + w[:3]
                truth.Omega = truth.Omega + w[3:]

            est = predict(est, cmd, t, gains, params, dt, Q=noise,
                          transition=config.transition,
                          jacobian=config.jacobian)
            min_eig = min(min_eig, est.min_eigenvalue)
        except (ControlDegeneracyError, FilterNumericalError) as e:
            status = "degenerate"
            abort_message = "t=%.4f: %s: %s" % (t, type(e).__name__, e)
            break

    metrics = None
    if records:
        window = None
        if config.window_start is not None:
            window = (config.window_start, config.duration)
        metrics = compute_metrics(
            records, columns, window=window,
            settle_value=(config.settle_value
                          if config.settle_value is not None else 0.2))
    if status == "ok" and metrics is not None:
        if (config.settle_time is not None
                and not metrics.convergence_time <= config.settle_time):
            status = "threshold_failure"
        if config.max_err_x is not None and metrics.max_err_x >= config.max_err_x:
            status = "threshold_failure"
        if config.max_err_v is not None and metrics.max_err_v >= config.max_err_v:
            status = "threshold_failure"

    return RunResult(config, columns, records, metrics, status, abort_message,
                     min_eig)


# ---------------------------------------------------------------------------
# metrics


def compute_metrics(records, columns, window=None, settle_value=0.2):
    """Estimation-error metrics over the telemetry rows.

    RMSE and max estimation errors are taken over `window` (default: the
    last half of the run, past the initial transient of both loops).
    Convergence time scans the whole run: first t with ||ebar_x|| below
    settle_value, where ebar_x = x_estimate - x_desired.
    """
    rows = np.array([r.values for r in records], dtype=float)
    t = rows[:, columns.index("t")]
    if window is None:
        window = (0.5 * t[-1], t[-1])
    # a truncated run can end before a configured window opens; clamp so the
    # window always contains at least the final sample
    w0 = min(float(window[0]), float(t[-1]))
    window = (w0, max(float(window[1]), w0))

    def cols(names):
        return rows[:, [columns.index(n) for n in names]]

    ex = cols([f"est.x{i}" for i in (1, 2, 3)]) - cols(
        [f"truth.x{i}" for i in (1, 2, 3)])
    ev = cols([f"est.v{i}" for i in (1, 2, 3)]) - cols(
        [f"truth.v{i}" for i in (1, 2, 3)])
    eom = cols([f"est.Omega{i}" for i in (1, 2, 3)]) - cols(
        [f"truth.Omega{i}" for i in (1, 2, 3)])
    Rt = cols([f"truth.{n}" for n in _R_NAMES]).reshape(-1, 3, 3)
    Re = cols([f"est.{n}" for n in _R_NAMES]).reshape(-1, 3, 3)
    eatt = np.array([np.linalg.norm(log_so3(a.T @ b))
                     for a, b in zip(Rt, Re)])

    in_w = (t >= window[0]) & (t <= window[1])

    def rmse(err):
        e = err[in_w]
        return float(np.sqrt(np.mean(np.sum(e * e, axis=1))))

    nx = np.linalg.norm(ex, axis=1)
    nv = np.linalg.norm(ev, axis=1)
    ebar = rows[:, [columns.index(n) for n in ("ebar_x1", "ebar_x2",
                                               "ebar_x3")]]
    nbar = np.linalg.norm(ebar, axis=1)
    below = np.nonzero(nbar < settle_value)[0]
    conv = float(t[below[0]]) if below.size else float("nan")

    return Metrics(window_start=float(window[0]), window_end=float(window[1]),
                   rmse_x=rmse(ex), rmse_v=rmse(ev),
                   rmse_att=float(np.sqrt(np.mean(eatt[in_w] ** 2))),
                   rmse_Omega=rmse(eom),
                   max_err_x=float(nx[in_w].max()),
                   max_err_v=float(nv[in_w].max()),
                   convergence_time=conv, settle_value=settle_value)


# ---------------------------------------------------------------------------
# CSV and config files


def write_csv(result, path):
    """Telemetry to CSV: exact column header, full-precision decimal floats."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(result.columns) + "\n")
        for rec in result.records:
            fh.write(",".join(repr(float(v)) for v in rec.values) + "\n")


def load_csv(path):
    """Read a telemetry CSV back into (columns, rows ndarray)."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        rows = [[float(x) for x in line.rstrip("\n").split(",")]
                for line in fh if line.strip()]
    return header, np.array(rows, dtype=float)


_CONFIG_SCALARS = {
    "scenario": str, "trajectory": str, "duration": float, "dt": float,
    "seed": int, "model": str, "feedback": str, "transition": str,
    "jacobian": str, "jacobian_deviation": bool, "measurement_noise": bool,
    "truth_process_noise": bool, "out": str,
    "noise.R": float, "noise.Q": float,
    "gains.k_x": float, "gains.k_v": float, "gains.k_R": float,
    "gains.k_Omega": float, "gains.k_I": float, "gains.k_i": float,
    "gains.sigma": float, "gains.c1": float, "gains.c2": float,
    "gains.psi1": float,
    "params.m": float, "params.g": float, "params.d": float,
    "metrics.window_start": float,
    "threshold.settle_value": float, "threshold.settle_time": float,
    "threshold.max_err_x": float, "threshold.max_err_v": float,
}

_CONFIG_VECTORS = {
    "params.J": (3, 9), "params.Delta_x": (3,), "params.Delta_R": (3,),
    "init.x": (3,), "init.v": (3,), "init.R": (9,), "init.Omega": (3,),
    "init.est_x": (3,), "init.est_v": (3,), "init.est_R": (9,),
    "init.est_Omega": (3,), "init.P0_diag": (18,),
}


def parse_config_text(text):
    """key = value lines -> dict; raises ConfigError naming bad keys/lines."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("line %d: expected 'key = value', got %r"
                              % (lineno, raw.strip()))
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key in _CONFIG_SCALARS:
            typ = _CONFIG_SCALARS[key]
            try:
                if typ is bool:
                    if val.lower() not in ("true", "false"):
                        raise ValueError
                    out[key] = val.lower() == "true"
                else:
                    out[key] = typ(val)
            except ValueError:
                raise ConfigError("line %d: bad value for key %r: %r"
                                  % (lineno, key, val)) from None
        elif key in _CONFIG_VECTORS:
            try:
                vec = [float(x) for x in val.split()]
            except ValueError:
                raise ConfigError("line %d: bad vector for key %r: %r"
                                  % (lineno, key, val)) from None
            if len(vec) not in _CONFIG_VECTORS[key]:
                raise ConfigError(
                    "line %d: key %r expects %s values, got %d"
                    % (lineno, key, " or ".join(
                        str(n) for n in _CONFIG_VECTORS[key]), len(vec)))
            out[key] = vec
        else:
            raise ConfigError("line %d: unknown key %r" % (lineno, key))
    return out


def apply_config(base, kv):
    """Overlay parsed key/values onto a ScenarioConfig, returning a new one."""
    cfg = replace(base)
    gains_kw = {}
    params_kw = {}
    for key, val in kv.items():
        if key == "scenario":
            continue
        if key.startswith("gains."):
            gains_kw[key.split(".", 1)[1]] = val
        elif key.startswith("params."):
            name = key.split(".", 1)[1]
            if name == "J" and len(val) == 3:
                params_kw["J"] = np.diag(val)
            elif name == "J":
                params_kw["J"] = np.array(val).reshape(3, 3)
            elif name in ("Delta_x", "Delta_R"):
                params_kw[name] = np.array(val)
            else:
                params_kw[name] = val
        elif key == "noise.R":
            cfg.R_meas = val
        elif key == "noise.Q":
            cfg.Q_proc = val
        elif key.startswith("init."):
            name = key.split(".", 1)[1]
            attr = {"x": "x0", "v": "v0", "R": "R0", "Omega": "Omega0",
                    "est_x": "est_x0", "est_v": "est_v0", "est_R": "est_R0",
                    "est_Omega": "est_Omega0", "P0_diag": "P0_diag"}[name]
            arr = np.array(val)
            if name in ("R", "est_R"):
                arr = arr.reshape(3, 3)
            setattr(cfg, attr, arr)
        elif key.startswith("threshold."):
            setattr(cfg, key.split(".", 1)[1], val)
        elif key == "metrics.window_start":
            cfg.window_start = val
        else:
            setattr(cfg, key, val)
    if gains_kw:
        g = cfg.gains
        base_kw = dict(k_x=g.k_x, k_v=g.k_v, k_R=g.k_R, k_Omega=g.k_Omega,
                       k_I=g.k_I, k_i=g.k_i, sigma=g.sigma, c1=g.c1,
                       c2=g.c2, psi1=g.psi1)
        base_kw.update(gains_kw)
        cfg.gains = Gains(**base_kw)
    if params_kw:
        p = cfg.params
        base_kw = dict(m=p.m, J=p.J, g=p.g, Delta_x=p.Delta_x,
                       Delta_R=p.Delta_R, d=p.d)
        base_kw.update(params_kw)
        cfg.params = QuadrotorParams(**base_kw)
    cfg.__post_init__()
    return cfg


def load_config(path, base=None):
    """Build a ScenarioConfig from a flat key=value file.

    The file (or the caller) must name the scenario; remaining keys override
    the scenario's defaults. Unknown keys are rejected with line numbers.
    """
    with open(path) as fh:
        kv = parse_config_text(fh.read())
    if base is None:
        if "scenario" not in kv:
            raise ConfigError("config file must set 'scenario' (or pass "
                              "--scenario)")
        name = kv["scenario"]
        if name not in SCENARIOS:
            raise ConfigError("unknown scenario %r" % name)
        base = SCENARIOS[name]()
    return apply_config(base, kv)


def config_to_text(cfg):
    """Serialize a ScenarioConfig to the flat key=value format."""
    buf = io.StringIO()

    def w(key, val):
        buf.write("%s = %s\n" % (key, val))

    def wv(key, arr):
        buf.write("%s = %s\n" % (key, " ".join(repr(float(x))
                                               for x in np.ravel(arr))))

    w("scenario", cfg.name)
    w("trajectory", cfg.trajectory)
    w("duration", repr(cfg.duration))
    w("dt", repr(cfg.dt))
    w("seed", cfg.seed)
    w("model", cfg.model)
    w("feedback", cfg.feedback)
    w("transition", cfg.transition)
    w("jacobian", cfg.jacobian)
    w("jacobian_deviation", str(cfg.jacobian_deviation).lower())
    w("measurement_noise", str(cfg.measurement_noise).lower())
    w("truth_process_noise", str(cfg.truth_process_noise).lower())
    if cfg.out is not None:
        w("out", cfg.out)
    w("noise.R", repr(cfg.R_meas))
    w("noise.Q", repr(cfg.Q_proc))
    g = cfg.gains
    for k in ("k_x", "k_v", "k_R", "k_Omega", "k_I", "k_i", "sigma",
              "c1", "c2", "psi1"):
        w("gains.%s" % k, repr(getattr(g, k)))
    p = cfg.params
    w("params.m", repr(p.m))
    w("params.g", repr(p.g))
    w("params.d", repr(p.d))
    wv("params.J", p.J)
    wv("params.Delta_x", p.Delta_x)
    wv("params.Delta_R", p.Delta_R)
    wv("init.x", cfg.x0)
    wv("init.v", cfg.v0)
    wv("init.R", cfg.R0)
    wv("init.Omega", cfg.Omega0)
    wv("init.est_x", cfg.est_x0)
    wv("init.est_v", cfg.est_v0)
    wv("init.est_R", cfg.est_R0)
    wv("init.est_Omega", cfg.est_Omega0)
    wv("init.P0_diag", cfg.P0_diag)
    if cfg.window_start is not None:
        w("metrics.window_start", repr(cfg.window_start))
    for k in ("settle_value", "settle_time", "max_err_x", "max_err_v"):
        v = getattr(cfg, k)
        if v is not None:
            w("threshold.%s" % k, repr(v))
    return buf.getvalue()


def write_config(cfg, path):
    with open(path, "w") as fh:
        fh.write(config_to_text(cfg))


# ---------------------------------------------------------------------------
# Jacobian verification sweep


def jacobian_sweep(config=None, n_states=120, stride=None, tol_full=1e-3,
                   tol_blocks=1e-4, h_fd=1e-6):
    """FD-vs-analytic Jacobian comparison along a closed-loop trajectory.

    Runs the scenario with true-state feedback and no measurement noise,
    samples states evenly, and compares assemble_A_L against fd_jacobian at
    each. States where a saturation boundary sits inside the FD stencil are
    skipped (the derivative is set-valued there). Returns a dict with
    per-state records and the overall worst errors.
    """
    if config is None:
        config = scenario_example1()
    cfg = replace(config)
    cfg.feedback = "truth"
    cfg.measurement_noise = False
    cmd = cfg.command()
    gains = cfg.gains
    params = cfg.params
    dt = cfg.dt
    n_steps = int(round(cfg.duration / dt))
    if stride is None:
        stride = max(1, n_steps // n_states)

    truth = FullState(cfg.x0, cfg.v0, cfg.R0, cfg.Omega0,
                      np.zeros(3), np.zeros(3))
    guard = max(1e-9, 2.0 * h_fd)
    checks = []
    worst_full = 0.0
    worst_block = ("", 0.0)
    for k in range(n_steps + 1):
        t = k * dt
        if k % stride == 0:
            on_boundary = np.any(
                np.abs(np.abs(truth.e_i1) - gains.sigma) < guard)
            if not on_boundary:
                A_an = assemble_A_L(truth, cmd, t, gains, params).A_L
                A_fd = fd_jacobian(
                    lambda ss: closed_loop_field(ss, cmd, t, gains, params),
                    truth, h=h_fd)
                errs = block_errors(A_an, A_fd)
                frob = (np.linalg.norm(A_an - A_fd)
                        / max(np.linalg.norm(A_fd), 1e-12))
                checks.append({"state_id": "k%05d" % k, "t": t,
                               "frobenius": frob, "blocks": errs})
                worst_full = max(worst_full, frob)
                bname, bval = max(errs.items(), key=lambda kv: kv[1])
                if bval > worst_block[1]:
                    worst_block = (bname, bval)
        if k < n_steps:
            truth = closed_loop_rk4_step(truth, cmd, t, gains, params, dt)

    # blocks that must never deviate: rows 1/3/5 plus the translational row
    strict_rows = ("x", "eta", "ei1", "v")
    deviations = []
    for c in checks:
        for name, rel in c["blocks"].items():
            row = name.split("/")[0]
            tol = tol_blocks if row in strict_rows else tol_full
            if rel > tol:
                deviations.append({"block": name, "state_id": c["state_id"],
                                   "relative_error": rel})
    ok = (not deviations
          and all(c["frobenius"] <= tol_full for c in checks)
          and len(checks) >= min(n_states, 100))
    return {"ok": ok, "n_states": len(checks), "checks": checks,
            "worst_frobenius": worst_full, "worst_block": worst_block,
            "deviations": deviations}


def write_deviation_csv(sweep, path):
    with open(path, "w", newline="") as fh:
        fh.write("block,state_id,relative_error\n")
        for d in sweep["deviations"]:
            fh.write("%s,%s,%s\n" % (d["block"], d["state_id"],
                                     repr(float(d["relative_error"]))))
