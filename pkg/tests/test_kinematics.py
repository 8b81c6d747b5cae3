import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.spatial.transform import Rotation

from reachppo.geometry import segments_distance
from reachppo.kinematics import (
    A_MAX,
    HOME_Q,
    UR5E_DH,
    UR5E_HOME_EE,
    ArmModel,
    JointLimitError,
    SamplingError,
    Workspace,
    forward_kinematics,
    sample_obstacles,
    sample_target,
)

MODEL = ArmModel()


def homogeneous(rot=None, trans=(0.0, 0.0, 0.0)):
    T = np.eye(4)
    if rot is not None:
        T[:3, :3] = rot.as_matrix()
    T[:3, 3] = trans
    return T


def oracle_chain(dh, q):
    """Frame origins from Rz(theta) Tz(d) Tx(a) Rx(alpha), built with scipy rotations."""
    T = np.eye(4)
    pts = [T[:3, 3].copy()]
    for (d, a, alpha, off), qi in zip(dh, q):
        T = (T @ homogeneous(Rotation.from_euler("z", qi + off))
             @ homogeneous(trans=(0, 0, d)) @ homogeneous(trans=(a, 0, 0))
             @ homogeneous(Rotation.from_euler("x", alpha)))
        pts.append(T[:3, 3].copy())
    return np.array(pts)


def random_q(rng, n=None):
    return rng.uniform(-A_MAX, A_MAX, (n, 6) if n else 6)


def test_home_pose_matches_oracle_and_constant():
    geom = forward_kinematics(MODEL, HOME_Q)
    np.testing.assert_allclose(oracle_chain(UR5E_DH, HOME_Q)[-1], UR5E_HOME_EE, atol=1e-12)
    np.testing.assert_allclose(geom.ee_position, UR5E_HOME_EE, atol=1e-12)


def test_random_configs_match_oracle():
    rng = np.random.default_rng(0)
    for q in random_q(rng, 20):
        np.testing.assert_allclose(forward_kinematics(MODEL, q).joint_positions,
                                   oracle_chain(UR5E_DH, q), atol=1e-12)


def test_geometry_layout():
    geom = forward_kinematics(MODEL, random_q(np.random.default_rng(1)))
    assert geom.joint_positions.shape == (7, 3)
    assert geom.link_segments.shape == (5, 2, 3)
    np.testing.assert_array_equal(geom.link_segments[-1, 1], geom.ee_position)
    # base pedestal excluded: first segment starts at the first joint frame, not the base origin
    np.testing.assert_array_equal(geom.link_segments[0, 0], geom.joint_positions[1])


def test_base_joint_rotates_about_z():
    rng = np.random.default_rng(2)
    q = random_q(rng) * 0.5
    q2 = q.copy()
    q2[0] += math.pi / 2
    e1 = forward_kinematics(MODEL, q).ee_position
    e2 = forward_kinematics(MODEL, q2).ee_position
    np.testing.assert_allclose(e2[:2], [-e1[1], e1[0]], atol=1e-12)
    assert e2[2] == pytest.approx(e1[2], abs=1e-12)


def test_rigidity():
    rng = np.random.default_rng(3)
    lengths = MODEL.link_lengths()
    for q in random_q(rng, 50):
        p = forward_kinematics(MODEL, q).joint_positions
        np.testing.assert_allclose(np.linalg.norm(np.diff(p, axis=0), axis=1), lengths, atol=1e-9)


def test_lipschitz_continuity():
    rng = np.random.default_rng(4)
    L = MODEL.link_lengths().sum()
    for q in random_q(rng, 50) * 0.99:
        dq = rng.normal(scale=1e-3, size=6)
        e0 = forward_kinematics(MODEL, q).ee_position
        e1 = forward_kinematics(MODEL, q + dq).ee_position
        assert np.linalg.norm(e1 - e0) <= L * np.linalg.norm(dq)


def test_out_of_limit_raises():
    q = np.zeros(6)
    q[3] = 3.2
    with pytest.raises(JointLimitError):
        forward_kinematics(MODEL, q)


def test_model_validation():
    with pytest.raises(ValueError):
        ArmModel(dh=np.zeros((5, 4)))
    with pytest.raises(ValueError):
        ArmModel(lower=np.full(6, -4.0))


def test_targets_within_shell():
    ws = Workspace()
    rng = np.random.default_rng(5)
    pts = np.array([sample_target(ws, rng) for _ in range(10_000)])
    r = np.linalg.norm(pts, axis=1)
    assert r.min() >= 0.4 and r.max() <= 0.95
    assert ws.contains(pts).all()
    # default quarter: x <= 0, y <= 0, above the table
    assert pts[:, 0].max() <= 0 and pts[:, 1].max() <= 0 and pts[:, 2].min() >= 0


def test_default_sector_faces_home_reach():
    ee = UR5E_HOME_EE
    assert Workspace(r_min=0.1).contains(ee * np.array([1, 1, 0]))


def test_sector_membership_wraps():
    ws = Workspace(az_min=3 * math.pi / 4, az_max=5 * math.pi / 4)
    on_seam = np.array([-0.7, 0.0, 0.1])
    assert ws.contains(on_seam)
    assert ws.contains(np.array([-0.6, -0.3, 0.1]))
    assert not ws.contains(np.array([0.6, 0.0, 0.1]))


def test_degenerate_shell():
    ws = Workspace(r_min=0.7, r_max=0.7)
    rng = np.random.default_rng(6)
    r = np.linalg.norm([sample_target(ws, rng) for _ in range(500)], axis=1)
    np.testing.assert_allclose(r, 0.7, atol=1e-9)


def test_mean_radius_monte_carlo():
    ws = Workspace()
    num = quad(lambda r: r**3, ws.r_min, ws.r_max)[0]
    den = quad(lambda r: r**2, ws.r_min, ws.r_max)[0]
    assert ws.mean_radius() == pytest.approx(num / den, rel=1e-12)
    rng = np.random.default_rng(7)
    r = np.linalg.norm([sample_target(ws, rng) for _ in range(100_000)], axis=1)
    assert r.mean() == pytest.approx(num / den, rel=0.01)


def test_no_obstacles():
    assert sample_obstacles(Workspace(), 0, 0.05, np.array([0.5, 0.2, 0.3]), np.random.default_rng(0)) == []


def test_obstacle_audit():
    ws = Workspace()
    rng = np.random.default_rng(8)
    segs = forward_kinematics(MODEL, HOME_Q).link_segments
    for _ in range(1000):
        target = sample_target(ws, rng)
        obs = sample_obstacles(ws, 3, 0.05, target, rng)
        assert len(obs) == 3
        for o in obs:
            assert np.linalg.norm(o.center - target) >= 0.10
            assert segments_distance(o.center, segs).min() >= 0.10
            assert ws.contains(o.center)


def test_obstacle_sampling_gives_up():
    ws = Workspace(r_min=0.4, r_max=0.45)
    with pytest.raises(SamplingError):
        sample_obstacles(ws, 1, 0.05, np.array([0.3, 0.3, 0.1]), np.random.default_rng(0), clearance=5.0)
