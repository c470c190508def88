"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The failsafe-scenario
criterion asserts the stated z-tracking bound against the configured
intent trajectory; the mechanism's fold limit makes the final 0.1 m of
that intent unreachable (see the project notes), so that single assertion
is expected to fail while every other criterion passes.
"""

import math
import time

import numpy as np
import pytest

from xrlsim import balance, model
from xrlsim import controller as ctl
from xrlsim.dynamics import SimState, Simulator, leg_ik, standing_pose
from xrlsim.params import RobotParams
from xrlsim.scenario import ScenarioRunner, parse_config, run

DEG = 180.0 / math.pi


def report(name, ok, detail=""):
    print(f"ACCEPTANCE [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok


# -- shared default scenario run -----------------------------------------------

class TickAudit:
    """Collects per-central-tick invariants during the default run."""

    def __init__(self, pair, gains):
        self.pair = pair
        self.Kp, self.Bp = gains.masked(pair)
        self.max_open_ref_err = 0.0
        self.max_open_force = 0.0
        self.ticks = 0

    def __call__(self, t, p_meas, pd_meas, out, controller):
        p_ref = controller.last_p_ref
        mask = self.pair.open_mask
        self.max_open_ref_err = max(self.max_open_ref_err,
                                    np.abs((p_ref - p_meas)[mask]).max())
        pd_ref = np.where(mask, pd_meas, 0.0)
        f_cl = self.Kp @ (p_ref - p_meas) + self.Bp @ (pd_ref - pd_meas)
        self.max_open_force = max(self.max_open_force,
                                  np.abs(f_cl[mask]).max())
        self.ticks += 1


@pytest.fixture(scope="session")
def default_run():
    cfg = parse_config("")
    audit = TickAudit(ctl.ProjectionPair(np.array(cfg.s_diag)), cfg.gains)
    runner = ScenarioRunner(cfg, central_hook=audit)
    t0 = time.perf_counter()
    summary = runner.run()
    wall = time.perf_counter() - t0
    return cfg, summary, audit, wall


# -- criteria -------------------------------------------------------------------

def test_c1_balance_numbers(params):
    t0 = time.perf_counter()
    r = balance.analyze(params, z_max=1.2957, m_tot=57.12)
    elapsed = time.perf_counter() - t0
    checks = [
        abs(r.theta_edge * DEG - 2.81) <= 0.01,
        abs(r.tau_ank_edge - 17.76) <= 0.05,
        abs(r.k_ank_min - 362.65) <= 0.5,
        abs(r.k_x_min - 432.0) <= 1.0,
        abs(r.k_x_tau_max - 2810.0) <= 5.0,
        elapsed < 1.0,
    ]
    ok = all(checks)
    assert report(
        "balance numbers", ok,
        f"theta_edge={r.theta_edge * DEG:.4f} deg, tau_edge={r.tau_ank_edge:.3f}, "
        f"K_ank={r.k_ank_min:.2f}, K_x={r.k_x_min:.2f}, "
        f"K_x@tau_max={r.k_x_tau_max:.1f}, runtime={elapsed * 1e3:.1f} ms")


def test_c2_differential_kinematics_oracle(params, manifold_configs):
    _, qs = manifold_configs
    worst_rel = 0.0
    worst_sym = 0.0
    for q in qs:
        J4 = model.jacobian(q, params, h=1e-4)
        J6 = model.jacobian(q, params, h=1e-6)
        worst_rel = max(worst_rel,
                        np.linalg.norm(J4 - J6) / np.linalg.norm(J6))
        H = model.hessian(q, params)
        worst_sym = max(worst_sym,
                        max(np.abs(H[i] - H[i].T).max() for i in range(6)))
    ok = worst_rel <= 1e-4 and worst_sym <= 1e-6
    assert report(
        "differential-kinematics oracle", ok,
        f"100 configs, max two-step rel diff {worst_rel:.2e} (<=1e-4), "
        f"max Hessian asymmetry {worst_sym:.2e} (<=1e-6)")


def test_c3_projector_and_nullspace_identities(params, manifold_configs):
    pair = ctl.ProjectionPair()
    S, Sp = pair.S, pair.S_perp
    exact = (np.array_equal(S @ S, S) and np.array_equal(S + Sp, np.eye(6)))
    _, qs = manifold_configs
    worst_jn = 0.0
    worst_idem = 0.0
    for q in qs:
        J = model.jacobian(q, params)
        N = model.nullspace_projector(J)
        worst_jn = max(worst_jn, np.linalg.norm(J @ N) / np.linalg.norm(J))
        worst_idem = max(worst_idem, np.linalg.norm(N @ N - N))
    ok = exact and worst_jn <= 1e-8 and worst_idem <= 1e-8
    assert report(
        "projector and nullspace identities", ok,
        f"S algebra exact={exact}, 100 configs: max ||JN||/||J|| {worst_jn:.2e}, "
        f"max ||N^2-N|| {worst_idem:.2e} (both <=1e-8)")


def test_c4_virtual_disconnection(default_run):
    _, _, audit, _ = default_run
    ok = (audit.ticks > 2000
          and audit.max_open_ref_err == 0.0
          and audit.max_open_force == 0.0)
    assert report(
        "virtual disconnection", ok,
        f"{audit.ticks} central ticks: max |S(p_ref - p_meas)| = "
        f"{audit.max_open_ref_err:.1e}, max open-loop feedback force = "
        f"{audit.max_open_force:.1e} (both exactly zero)")


def test_c5_distributed_law_equivalence(params, manifold_configs):
    us, qs = manifold_configs
    gains = ctl.GainConfig()
    pair = ctl.ProjectionPair()
    Kp, Bp = gains.masked(pair)
    w_ff = ctl.feedforward_wrench(params)      # gravity + full assist

    # restrict to gently flexed configurations where the loaded stiffness
    # map stays positive semidefinite (deep flexion legitimately trips the
    # controller's fallback, which drops the Hessian term under test here)
    rng = np.random.default_rng(77)
    tested = 0
    exact_ok = True
    ratios = []
    # one differencing step for both sides of the comparison, so that the
    # Jacobian's finite-difference roundoff (which the 900 N feedforward
    # amplifies) cannot mask the quadratic term being measured
    h_j = 1e-4
    for u, q_ref in zip(us, qs):
        if not 1.05 <= u[2] <= 1.22 or tested >= 5:
            continue
        J = model.jacobian(q_ref, params, h=h_j)
        H = model.hessian(q_ref, params)
        try:
            K_q = ctl.joint_stiffness(J, H, w_ff, Kp, gains.k0)
        except ctl.GainIndefinite:
            continue
        tested += 1
        tau_ff = ctl.feedforward_torques(J, w_ff)
        exact_ok &= np.array_equal(K_q @ np.zeros(12) + tau_ff, tau_ff)

        p_ref = model.task_pose(q_ref, params)
        # task-relevant perturbation directions: row space of J
        _, _, Vt = np.linalg.svd(J)
        direction = Vt[:6].T @ rng.standard_normal(6)
        direction /= np.linalg.norm(direction)

        def mismatch(eps):
            dq = eps * direction
            q = q_ref + dq
            tau_dist = -K_q @ dq + tau_ff
            F = ctl.task_wrench(p_ref, model.task_pose(q, params),
                                np.zeros(6), np.zeros(6), Kp, Bp, w_ff)
            tau_task = model.jacobian(q, params, h=h_j).T @ F
            return np.linalg.norm(tau_dist - tau_task)

        m3, m4, m5 = mismatch(1e-3), mismatch(1e-4), mismatch(1e-5)
        ratios += [m3 / m4, m4 / m5]

    quad_ok = all(100.0 / 4.0 <= r <= 100.0 * 4.0 for r in ratios)
    ok = tested >= 3 and exact_ok and quad_ok
    assert report(
        "distributed-law equivalence", ok,
        f"{tested} configs: zero-error torque exact={exact_ok}; "
        f"quadratic-shrinkage ratios {[f'{r:.0f}' for r in ratios]} "
        f"(each within 4x of 100)")


def test_c6_static_equilibrium_of_feedforward(params):
    sim = Simulator(params)
    u = standing_pose(params)
    u[2] -= 0.2
    q = leg_ik(u, np.zeros(12), params)
    a = sim.assemble(u, q)
    w = np.zeros(6)
    w[2] = params.g * params.m_total
    tau = model.jacobian(a.q, params).T @ w
    st = SimState(u=u, ud=np.zeros(6), t=0.0, q=a.q, qd=np.zeros(12))
    udd, _ = sim.generalized_dynamics(st, tau, np.zeros(6), assembled=a)
    norm = float(np.linalg.norm(udd))
    ok = norm <= 1e-3
    assert report("static equilibrium of feedforward", ok,
                  f"||u_dd|| = {norm:.2e} (<= 1e-3)")


def test_c7_failsafe_scenario(default_run):
    cfg, s, _, wall = default_run
    in_reach_note = ("intent floor: the fold hard-stop pins the COM near "
                     "0.648 m, the 0.55 m terminal intent is unreachable")
    checks = {
        "verdict STABLE": s.verdict == "STABLE",
        "|x| < 0.02": s.max_abs_x < 0.02,
        "|y| < 0.02": s.max_abs_y < 0.02,
        "|roll| < 2 deg": s.max_abs_roll_deg < 2.0,
        "|yaw| < 2 deg": s.max_abs_yaw_deg < 2.0,
        "z tracks z_h <= 0.05": s.z_track_err <= 0.05,
        "settles within 0.05 in 10 s": (s.settle_err is not None
                                        and s.settle_err <= cfg.settle_tol),
        "runtime < 60 s": wall < 60.0,
    }
    detail = (f"x={s.max_abs_x:.4f} y={s.max_abs_y:.4f} "
              f"roll={s.max_abs_roll_deg:.2f} yaw={s.max_abs_yaw_deg:.2f} "
              f"z_err={s.z_track_err:.4f} settle={s.settle_err} "
              f"wall={wall:.1f}s")
    ok = all(checks.values())
    if not checks["z tracks z_h <= 0.05"]:
        detail += f" [{in_reach_note}]"
    report("failsafe scenario", ok, detail)
    failed = [k for k, v in checks.items() if not v]
    assert ok, f"failed sub-checks: {failed}"


def test_c8_energy_sanity(params):
    # unactuated, undamped, operator-decoupled coast (zero gravity: the
    # planted-feet mechanism has no stable unactuated equilibrium, so a
    # gravity-on coast exits the leg workspace long before 5 s)
    p0 = params.replace(g=1e-12)
    sim = Simulator(p0, workspace_guard=False)
    u0 = standing_pose(params)
    u0[2] -= 0.2
    st = sim.initial_state(u0)
    st = SimState(u=st.u, ud=np.array([0.02, -0.015, -0.03, 0.02, -0.02, 0.025]),
                  t=0.0, q=st.q, qd=st.qd)
    k0, v0 = sim.energy(st)
    e0 = k0 + v0
    worst = 0.0
    for i in range(5000):
        st = sim.step(st, np.zeros(12), np.zeros(6), 1e-3)
        if i % 250 == 249:
            k, v = sim.energy(st)
            worst = max(worst, abs(k + v - e0) / e0)
    ok = worst <= 0.005
    assert report("energy sanity", ok,
                  f"max |dE|/E over 5 s at dt=1 ms: {worst * 100:.4f}% (<= 0.5%)")


def test_c9_determinism(tmp_path):
    text = "sim.duration = 2.0\n"

    def one(path):
        cfg = parse_config(text)
        cfg.trace_path = str(path)
        run(cfg)
        return path.read_bytes()

    a = one(tmp_path / "run1.csv")
    b = one(tmp_path / "run2.csv")
    ok = a == b and len(a) > 100_000
    assert report("determinism", ok,
                  f"two runs, {len(a)} bytes each, byte-identical={a == b}")
