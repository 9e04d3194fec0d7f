"""Geometric quadrotor tracking control on SE(3) with an error-state EKF.

Subpackage map:
  geom          rotation-group primitives (hat/vee, exp/log, errors)
  dynamics      rigid-body equations of motion + RK4
  controller    geometric position/attitude tracking controller
  linearization analytic 18x18 closed-loop Jacobian + FD oracle
  estimator     error-state extended Kalman filter
  harness       scenarios, simulation loop, telemetry, CSV, metrics
  plots         figure rendering for scenario runs
  cli           command-line entry point
"""

from .geom import (hat, vee, exp_so3, log_so3, project_so3, attitude_error,
                   angular_velocity_error, sat, inv_right_jacobian_so3)
from .dynamics import (QuadrotorParams, QuadrotorState, ControlInput,
                       state_derivative, rk4_step)
from .controller import (Gains, TrajectoryCommand, ControllerState,
                         ComputedAttitude, ControlDegeneracyError,
                         DegenerateThrustError, HeadingSingularityError,
                         tracking_errors, compute_A, compute_Rc, thrust,
                         integral_rates, attitude_moment, mode_gate,
                         compute_Omega_c, compute_Omega_c_dot, control_input)
from .linearization import (FullState, ReducedState, LinearizedSystem,
                            closed_loop_field, fd_jacobian, assemble_A_L,
                            block_errors, deviation_report, retract)
from .estimator import (Estimate, Measurement, MeasurementModel, NoiseConfig,
                        FilterNumericalError, default_P0, model_pos_att_gyro,
                        model_att_gyro, model_full, sample_measurement,
                        predict, update, estimation_error, nees)
from .harness import (ScenarioConfig, ConfigError, SCENARIOS, TRAJECTORIES,
                      scenario_example1, scenario_example2,
                      scenario_experiment_replay, run, compute_metrics,
                      Metrics, RunResult, write_csv, load_csv, load_config,
                      write_config, jacobian_sweep)

__all__ = [
    "hat", "vee", "exp_so3", "log_so3", "project_so3", "attitude_error",
    "angular_velocity_error", "sat", "inv_right_jacobian_so3",
    "QuadrotorParams", "QuadrotorState", "ControlInput",
    "state_derivative", "rk4_step",
    "Gains", "TrajectoryCommand", "ControllerState", "ComputedAttitude",
    "ControlDegeneracyError", "DegenerateThrustError",
    "HeadingSingularityError",
    "tracking_errors", "compute_A", "compute_Rc", "thrust",
    "integral_rates", "attitude_moment", "mode_gate",
    "compute_Omega_c", "compute_Omega_c_dot", "control_input",
    "FullState", "ReducedState", "LinearizedSystem",
    "closed_loop_field", "fd_jacobian", "assemble_A_L",
    "block_errors", "deviation_report", "retract",
    "Estimate", "Measurement", "MeasurementModel", "NoiseConfig",
    "FilterNumericalError", "default_P0", "model_pos_att_gyro",
    "model_att_gyro", "model_full", "sample_measurement",
    "predict", "update", "estimation_error", "nees",
    "ScenarioConfig", "ConfigError", "SCENARIOS", "TRAJECTORIES",
    "scenario_example1", "scenario_example2", "scenario_experiment_replay",
    "run", "compute_metrics", "Metrics", "RunResult",
    "write_csv", "load_csv", "load_config", "write_config", "jacobian_sweep",
]

__version__ = "0.1.0"
