"""Command line front end.

Exit codes: 0 success, 1 a configured threshold was not met, 2 the run hit a
controller degeneracy and aborted, 3 bad configuration or I/O.
"""

import argparse
import os
import sys

import numpy as np

from .harness import (ConfigError, SCENARIOS, jacobian_sweep, load_config,
                      run, write_csv, write_deviation_csv)


def _build_parser():
    p = argparse.ArgumentParser(
        prog="se3quad",
        description="geometric-controller quadrotor simulation and "
                    "error-state filter harness")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="simulate a scenario, write telemetry "
                                    "CSV and report figures")
    pr.add_argument("--scenario", choices=sorted(SCENARIOS),
                    help="bundled scenario name")
    pr.add_argument("--config", help="flat key=value config file "
                                     "(overrides scenario defaults)")
    pr.add_argument("--out", help="telemetry CSV path "
                                  "(default <scenario>.csv)")
    pr.add_argument("--seed", type=int, help="override the RNG seed")
    pr.add_argument("--dt", type=float, help="override the time step")
    pr.add_argument("--duration", type=float, help="override the duration")
    pr.add_argument("--no-figures", action="store_true",
                    help="skip rendering the PNG report figures")

    pv = sub.add_parser("verify-jacobian",
                        help="compare the analytic closed-loop Jacobian "
                             "against finite differences along a trajectory")
    pv.add_argument("--scenario", default="example1",
                    choices=sorted(SCENARIOS))
    pv.add_argument("--states", type=int, default=120,
                    help="number of states to sample (default 120)")
    pv.add_argument("--tol", type=float, default=1e-3,
                    help="full-matrix relative tolerance (default 1e-3)")
    pv.add_argument("--out", help="deviation report CSV path")

    sub.add_parser("list-scenarios", help="list bundled scenario names")
    return p


def _cmd_run(args):
    try:
        if args.config:
            base = SCENARIOS[args.scenario]() if args.scenario else None
            cfg = load_config(args.config, base=base)
        elif args.scenario:
            cfg = SCENARIOS[args.scenario]()
        else:
            print("error: need --scenario or --config", file=sys.stderr)
            return 3
        if args.seed is not None:
            cfg.seed = args.seed
        if args.dt is not None:
            cfg.dt = args.dt
        if args.duration is not None:
            cfg.duration = args.duration
        if args.out is not None:
            cfg.out = args.out
        cfg.__post_init__()
    except (ConfigError, OSError, KeyError) as e:
        print("error: %s" % e, file=sys.stderr)
        return 3

    result = run(cfg)

    out = cfg.out or ("%s.csv" % cfg.name)
    try:
        write_csv(result, out)
    except OSError as e:
        print("error: cannot write %s: %s" % (out, e), file=sys.stderr)
        return 3
    print("telemetry: %s (%d rows)" % (out, len(result.records)))

    if not args.no_figures and result.records:
        from .plots import render_report
        rows = np.array([r.values for r in result.records], dtype=float)
        stem = os.path.splitext(out)[0]
        for f in render_report(result.columns, rows, stem):
            print("figure: %s" % f)

    m = result.metrics
    if m is not None:
        print("estimation RMSE over [%.2f, %.2f] s: position %.4g m, "
              "velocity %.4g m/s, attitude %.4g rad"
              % (m.window_start, m.window_end, m.rmse_x, m.rmse_v, m.rmse_att))
        print("max estimation error: position %.4g m, velocity %.4g m/s"
              % (m.max_err_x, m.max_err_v))
        print("convergence (||x error|| < %.3g m) at t = %.4g s"
              % (m.settle_value, m.convergence_time))
    print("min covariance eigenvalue over run: %.3g"
          % result.min_P_eigenvalue)

    if result.status == "degenerate":
        print("DEGENERATE ABORT: %s" % result.abort_message, file=sys.stderr)
        return 2
    if result.status == "threshold_failure":
        print("threshold failure (see metrics above)", file=sys.stderr)
        return 1
    print("status: ok")
    return 0


def _cmd_verify_jacobian(args):
    cfg = SCENARIOS[args.scenario]()
    sweep = jacobian_sweep(cfg, n_states=args.states, tol_full=args.tol)
    print("checked %d states along the %s closed-loop trajectory"
          % (sweep["n_states"], args.scenario))
    print("worst full-matrix relative error: %.3g" % sweep["worst_frobenius"])
    print("worst block: %s at %.3g" % sweep["worst_block"])
    if args.out:
        try:
            write_deviation_csv(sweep, args.out)
        except OSError as e:
            print("error: cannot write %s: %s" % (args.out, e),
                  file=sys.stderr)
            return 3
        print("deviation report: %s (%d records)"
              % (args.out, len(sweep["deviations"])))
    if not sweep["ok"]:
        for d in sweep["deviations"][:20]:
            print("deviation: %s at %s rel %.3g"
                  % (d["block"], d["state_id"], d["relative_error"]),
                  file=sys.stderr)
        return 1
    print("status: ok")
    return 0


def _cmd_list(_args):
    for name in sorted(SCENARIOS):
        cfg = SCENARIOS[name]()
        print("%-18s trajectory=%s model=%s duration=%gs dt=%gs"
              % (name, cfg.trajectory, cfg.model, cfg.duration, cfg.dt))
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        code = _cmd_run(args)
    elif args.command == "verify-jacobian":
        code = _cmd_verify_jacobian(args)
    else:
        code = _cmd_list(args)
    return code


if __name__ == "__main__":
    sys.exit(main())
