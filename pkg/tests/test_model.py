import numpy as np
import pytest

from xrlsim import model
from xrlsim.params import RobotParams
from xrlsim.rotations import (
    GimbalLock,
    euler_zxy_to_matrix,
    matrix_to_euler_zxy,
    rot_x,
    rot_y,
    rot_z,
)

Z_COM_ZERO = 0.9299   # hand-evaluated COM height at the zero configuration


# -- forward kinematics -------------------------------------------------------

def test_fk_zero_configuration(params):
    fs = model.forward_kinematics(np.zeros(12), params)
    np.testing.assert_allclose(fs.r_knee_r, [0.0, -0.3461, 1.0290], atol=1e-12)
    np.testing.assert_allclose(fs.r_torso[2], params.l1 + params.l2, atol=1e-12)
    np.testing.assert_allclose(fs.r_torso, [0.0, 0.0, 1.2957], atol=1e-12)
    np.testing.assert_allclose(fs.R_torso, np.eye(3), atol=1e-14)


def test_fk_ankles_fixed(params):
    fs = model.forward_kinematics(np.zeros(12), params)
    np.testing.assert_allclose(fs.r_ankle_r, [0.0, -0.6922 / 2, 0.0], atol=0)
    np.testing.assert_allclose(fs.r_ankle_l, [0.0, +0.6922 / 2, 0.0], atol=0)


def test_fk_symmetric_ankle_pitch_vs_transform_oracle(params):
    # both ankle sagittal angles 0.1 rad is closure-consistent: pure pitch
    q = np.zeros(12)
    q[1] = q[7] = 0.1
    fs = model.forward_kinematics(q, params)

    # independent oracle: homogeneous transform chain for the right leg
    def homog(R, t):
        T = np.eye(4)
        T[:3, :3] = R
        T[:3, 3] = t
        return T

    T = homog(np.eye(3), [0.0, -params.w_base / 2, 0.0])
    T = T @ homog(rot_x(0.0) @ rot_y(0.1), [0, 0, 0])
    T = T @ homog(np.eye(3), [0, 0, params.l2])          # to the knee
    T = T @ homog(np.eye(3), [0, 0, params.l1])          # to the hip
    T = T @ homog(np.eye(3), [0, params.w_base / 2, 0])  # to the center
    np.testing.assert_allclose(fs.r_torso, T[:3, 3], atol=1e-12)
    np.testing.assert_allclose(fs.R_torso, rot_y(0.1), atol=1e-12)
    assert fs.closure_pos_err < 1e-12


def test_fk_closure_violation_raises(params):
    q = np.zeros(12)
    q[1] = 0.2   # only the right ankle pitches: chains disagree
    with pytest.raises(model.ClosureViolation):
        model.forward_kinematics(q, params)


def test_fk_closure_on_manifold(params, manifold_configs):
    _, qs = manifold_configs
    for q in qs:
        fs = model.forward_kinematics(q, params)
        assert fs.closure_pos_err <= 1e-6
        assert fs.closure_rot_err <= 1e-6


def test_fk_orthonormality(params, manifold_configs):
    _, qs = manifold_configs
    for q in qs[:25]:
        R = model.forward_kinematics(q, params).R_torso
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-10)
        assert abs(np.linalg.det(R) - 1.0) < 1e-10


def test_fk_rejects_bad_input(params):
    with pytest.raises(ValueError):
        model.forward_kinematics(np.zeros(6), params)
    q = np.zeros(12)
    q[3] = np.nan
    with pytest.raises(ValueError):
        model.forward_kinematics(q, params)


# -- center of mass -----------------------------------------------------------

def test_com_zero_config_symmetry_and_height(params):
    com = model.com_position(np.zeros(12), params)
    assert com[0] == 0.0 and com[1] == 0.0
    np.testing.assert_allclose(com[2], Z_COM_ZERO, atol=5e-5)


def test_com_payload_monotonic(params):
    com_full = model.com_position(np.zeros(12), params)
    com_empty = model.com_position(np.zeros(12), params.replace(m_pl=0.0))
    assert com_empty[2] < com_full[2]


def test_com_mirror_invariance(params, manifold_configs):
    _, qs = manifold_configs
    for q in qs[:30]:
        com = model.com_position(q, params)
        com_m = model.com_position(model.mirror_joints(q), params)
        np.testing.assert_allclose(com_m, com * [1.0, -1.0, 1.0], atol=1e-10)


# -- torso Euler angles -------------------------------------------------------

def test_euler_identity():
    assert model.torso_euler(np.eye(3)) == (0.0, 0.0, 0.0)


def test_euler_pure_pitch():
    roll, pitch, yaw = model.torso_euler(rot_y(0.3))
    np.testing.assert_allclose([roll, pitch, yaw], [0.0, 0.3, 0.0], atol=1e-15)


def test_euler_compose_decompose():
    R = rot_y(0.2) @ rot_x(0.1) @ rot_z(0.05)
    np.testing.assert_allclose(model.torso_euler(R), (0.1, 0.2, 0.05), atol=1e-12)


def test_euler_roundtrip_random():
    rng = np.random.default_rng(7)
    for _ in range(200):
        roll = rng.uniform(-np.pi / 2 + 0.01, np.pi / 2 - 0.01)
        pitch, yaw = rng.uniform(-np.pi, np.pi, 2)
        R = euler_zxy_to_matrix(roll, pitch, yaw)
        got = matrix_to_euler_zxy(R)
        np.testing.assert_allclose(got, (roll, pitch, yaw), atol=1e-9)


def test_euler_gimbal_lock():
    with pytest.raises(GimbalLock):
        model.torso_euler(rot_x(np.pi / 2))


# -- task pose ----------------------------------------------------------------

def test_task_pose_zero(params):
    p = model.task_pose(np.zeros(12), params)
    np.testing.assert_allclose(p, [0, 0, Z_COM_ZERO, 0, 0, 0], atol=5e-5)


def test_task_pose_position_rows_equal_com(params, manifold_configs):
    _, qs = manifold_configs
    for q in qs[:20]:
        p = model.task_pose(q, params)
        np.testing.assert_array_equal(p[:3], model.com_position(q, params))


def test_task_pose_symmetric_ankle_pitch(params):
    q = np.zeros(12)
    q[1] = q[7] = 0.1
    p = model.task_pose(q, params)
    assert p[3] == 0.0 and p[5] == 0.0
    assert abs(p[4] - 0.1) < 1e-12


# -- jacobian -----------------------------------------------------------------

def test_jacobian_ankle_sagittal_moves_x(params):
    J = model.jacobian(np.zeros(12), params)
    assert abs(J[0, 1]) > 0.1      # right ankle sagittal
    assert abs(J[0, 7]) > 0.1      # left ankle sagittal


def test_jacobian_two_step_agreement(params, manifold_configs):
    _, qs = manifold_configs
    for q in qs:
        J4 = model.jacobian(q, params, h=1e-4)
        J6 = model.jacobian(q, params, h=1e-6)
        rel = np.linalg.norm(J4 - J6) / np.linalg.norm(J6)
        assert rel < 1e-4


def test_jacobian_nullspace_motion_is_silent(params, manifold_configs):
    _, qs = manifold_configs
    rng = np.random.default_rng(5)
    for q in qs[:20]:
        J = model.jacobian(q, params)
        N = model.nullspace_projector(J)
        qdot = N @ rng.standard_normal(12)
        assert np.linalg.norm(J @ qdot) <= 1e-7 * max(1.0, np.linalg.norm(qdot))


def test_jacobian_com_rows_are_mass_weighted_point_jacobians(params, manifold_configs):
    # oracle: differentiate each mass point separately and recombine
    _, qs = manifold_configs
    p = params
    h = 1e-6
    for q in qs[:5]:
        J = model.jacobian(q, params)
        J_pts = np.zeros((3, 12))
        for j in range(12):
            qp, qm = q.copy(), q.copy()
            qp[j] += h
            qm[j] -= h
            fsp = model.forward_kinematics(qp, params, closure_tol=None)
            fsm = model.forward_kinematics(qm, params, closure_tol=None)
            num = (p.m_torso * (fsp.r_torso - fsm.r_torso)
                   + p.m_act * (fsp.r_knee_r - fsm.r_knee_r)
                   + p.m_act * (fsp.r_knee_l - fsm.r_knee_l))
            J_pts[:, j] = num / (2 * h * p.m_total)
        np.testing.assert_allclose(J[:3], J_pts, atol=1e-7)


def test_jacobian_left_joints_do_not_move_right_knee(params, manifold_configs):
    _, qs = manifold_configs
    h = 1e-6
    for q in qs[:5]:
        for j in range(6, 12):
            qp, qm = q.copy(), q.copy()
            qp[j] += h
            qm[j] -= h
            fsp = model.forward_kinematics(qp, params, closure_tol=None)
            fsm = model.forward_kinematics(qm, params, closure_tol=None)
            assert np.linalg.norm(fsp.r_knee_r - fsm.r_knee_r) == 0.0


# -- hessian ------------------------------------------------------------------

def test_hessian_slices_symmetric(params, manifold_configs):
    _, qs = manifold_configs
    for q in qs[:10]:
        H = model.hessian(q, params)
        for i in range(6):
            assert np.abs(H[i] - H[i].T).max() < 1e-6


def test_hessian_against_direct_second_difference(params):
    # independent oracle at a different step size, z row at the zero config
    q0 = np.zeros(12)
    H = model.hessian(q0, params)
    h = 3e-4
    for j in (1, 3):     # right ankle and knee sagittal
        e = np.zeros(12)
        e[j] = h
        pz = (model.task_pose(q0 + e, params)[2]
              - 2 * model.task_pose(q0, params)[2]
              + model.task_pose(q0 - e, params)[2]) / (h * h)
        np.testing.assert_allclose(H[2, j, j], pz, atol=2e-5)
        assert H[2, j, j] < 0      # height curvature is concave upright


def test_hessian_zero_contraction(params):
    H = model.hessian(np.zeros(12), params)
    contracted = np.einsum("ijk,i->jk", H, np.zeros(6))
    assert np.all(contracted == 0.0)


# -- nullspace projector ------------------------------------------------------

def test_nullspace_zero_jacobian():
    N = model.nullspace_projector(np.zeros((6, 12)))
    np.testing.assert_allclose(N, np.eye(12), atol=1e-12)


def test_nullspace_full_rank_trace(params, manifold_configs):
    _, qs = manifold_configs
    J = model.jacobian(qs[0], params)
    N = model.nullspace_projector(J)
    np.testing.assert_allclose(np.trace(N), 6.0, atol=1e-6)


def test_nullspace_properties_random_matrices():
    rng = np.random.default_rng(11)
    for _ in range(50):
        J = rng.standard_normal((6, 12))
        N = model.nullspace_projector(J)
        assert np.linalg.norm(N @ N - N) <= 1e-8
        assert np.linalg.norm(J @ N) <= 1e-8 * np.linalg.norm(J)
