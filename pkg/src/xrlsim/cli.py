"""Command-line interface: run scenarios, print balance margins, self-check,
and serve the live telemetry bridge."""

import argparse
import sys

import numpy as np

from . import balance
from .scenario import ConfigError, ScenarioConfig, load_config, run


def _load(path: str | None) -> ScenarioConfig:
    if path is None:
        from .scenario import parse_config
        return parse_config("")
    return load_config(path)


def cmd_run(args) -> int:
    cfg = _load(args.config)
    if args.trace:
        cfg.trace_path = args.trace
    summary = run(cfg)
    print(summary.to_json() if args.json else summary.to_text())
    return 0 if summary.verdict in ("STABLE", "PASS") else 1


def cmd_balance(args) -> int:
    cfg = _load(args.config)
    report = balance.analyze(cfg.robot)
    print(report.to_json() if args.json else report.to_text())
    return 0


def cmd_check(args) -> int:
    """Quick invariant self-tests (a fast subset of the full suite)."""
    from . import controller as ctl
    from . import model
    from .dynamics import leg_ik, standing_pose
    from .params import RobotParams

    failures = []

    def check(name, ok):
        print(f"  [{'ok' if ok else 'FAIL'}] {name}")
        if not ok:
            failures.append(name)

    p = RobotParams()
    pair = ctl.ProjectionPair()
    S, Sp = pair.S, pair.S_perp
    check("projector algebra", np.array_equal(S @ S, S)
          and np.array_equal(S + Sp, np.eye(6)))

    fs = model.forward_kinematics(np.zeros(12), p)
    check("zero-config closure",
          fs.closure_pos_err == 0.0 and abs(fs.r_torso[2] - 1.2957) < 1e-12)
    com = model.com_position(np.zeros(12), p)
    check("zero-config COM height", abs(com[2] - 0.9299) < 5e-5)

    rep = balance.analyze(p)
    check("balance margins", abs(rep.k_x_min - 432.0) < 1.0
          and abs(rep.tau_ank_edge - 17.76) < 0.05)

    rng = np.random.default_rng(0)
    u0 = standing_pose(p)
    u0[2] -= 0.2
    q = leg_ik(u0, np.zeros(12), p)
    ok = True
    for _ in range(10):
        u = u0 + np.concatenate([rng.uniform(-0.02, 0.02, 2),
                                 [rng.uniform(-0.2, 0.1)],
                                 rng.uniform(-0.05, 0.05, 3)])
        q = leg_ik(u, q, p)
        fs = model.forward_kinematics(q, p)
        ok &= fs.closure_pos_err <= 1e-6
    check("random-pose closure", ok)

    ok = True
    for _ in range(5):
        p_ref = model.task_pose(q, p)
        p_ref[[0, 1]] += rng.uniform(-1e-3, 1e-3, 2)
        q_sol = ctl.inverse_kinematics(p_ref, q, p)
        ok &= np.linalg.norm(model.task_pose(q_sol, p) - p_ref) <= 1e-8
    check("IK round trip", ok)

    J = model.jacobian(q, p)
    N = model.nullspace_projector(J)
    check("nullspace identities",
          np.linalg.norm(N @ N - N) <= 1e-8
          and np.linalg.norm(J @ N) <= 1e-8 * np.linalg.norm(J))

    if failures:
        print(f"{len(failures)} check(s) failed")
        return 1
    print("all checks passed")
    return 0


def cmd_serve(args) -> int:
    from .bridge import serve

    cfg = _load(args.config)
    if args.host:
        cfg.host = args.host
    if args.port:
        cfg.port = args.port
    if args.trace:
        cfg.trace_path = args.trace
    summary = serve(cfg)
    print(summary.to_text())
    return 0 if summary.verdict in ("STABLE", "PASS") else 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="xrlsim",
        description="two-leg closed-chain robot simulator and controller")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="run a scenario headless")
    p_run.add_argument("config", nargs="?", help="scenario config file")
    p_run.add_argument("--json", action="store_true")
    p_run.add_argument("--trace", help="override trace output path")
    p_run.set_defaults(fn=cmd_run)

    p_bal = sub.add_parser("balance", help="print static balance margins")
    p_bal.add_argument("config", nargs="?")
    p_bal.add_argument("--json", action="store_true")
    p_bal.set_defaults(fn=cmd_balance)

    p_chk = sub.add_parser("check", help="run quick invariant self-tests")
    p_chk.set_defaults(fn=cmd_check)

    p_srv = sub.add_parser("serve", help="run paced to wall clock with the "
                                         "telemetry/command bridge")
    p_srv.add_argument("config", nargs="?")
    p_srv.add_argument("--host")
    p_srv.add_argument("--port", type=int)
    p_srv.add_argument("--trace")
    p_srv.set_defaults(fn=cmd_serve)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
