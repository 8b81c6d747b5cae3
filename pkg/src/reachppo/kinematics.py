"""Forward kinematics of a 6-axis serial arm and workspace sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

A_MAX = 3.14
N_JOINTS = 6

# Standard Denavit-Hartenberg rows (d, a, alpha, theta_offset) for the UR5e.
UR5E_DH = np.array([
    [0.1625, 0.0, math.pi / 2, 0.0],
    [0.0, -0.425, 0.0, 0.0],
    [0.0, -0.3922, 0.0, 0.0],
    [0.1333, 0.0, math.pi / 2, 0.0],
    [0.0997, 0.0, -math.pi / 2, 0.0],
    [0.0996, 0.0, 0.0, 0.0],
])
HOME_Q = np.zeros(N_JOINTS)
# End-effector position of the UR5e at HOME_Q.
UR5E_HOME_EE = np.array([-0.8172, -0.2329, 0.0628])


class JointLimitError(ValueError):
    """A joint configuration lies outside the arm's limits."""


class SamplingError(RuntimeError):
    """Rejection sampling gave up."""


@dataclass(frozen=True)
class ArmModel:
    """Kinematic description of a 6-joint serial arm.

    ``dh`` holds one ``(d, a, alpha, theta_offset)`` row per joint using the
    classic (distal) Denavit-Hartenberg convention.
    """

    dh: np.ndarray = field(default_factory=lambda: UR5E_DH.copy())
    lower: np.ndarray = field(default_factory=lambda: np.full(N_JOINTS, -A_MAX))
    upper: np.ndarray = field(default_factory=lambda: np.full(N_JOINTS, A_MAX))

    def __post_init__(self):
        dh = np.asarray(self.dh, dtype=np.float64)
        lower = np.asarray(self.lower, dtype=np.float64)
        upper = np.asarray(self.upper, dtype=np.float64)
        if dh.shape != (N_JOINTS, 4):
            raise ValueError(f"dh table must be {N_JOINTS}x4, got {dh.shape}")
        if lower.shape != (N_JOINTS,) or upper.shape != (N_JOINTS,):
            raise ValueError("joint limits need one entry per joint")
        if np.any(lower > upper) or np.any(lower < -A_MAX - 1e-12) or np.any(upper > A_MAX + 1e-12):
            raise ValueError(f"joint limits must be ordered and within +-{A_MAX}")
        object.__setattr__(self, "dh", dh)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "_cos_alpha", np.cos(dh[:, 2]))
        object.__setattr__(self, "_sin_alpha", np.sin(dh[:, 2]))

    def link_lengths(self) -> np.ndarray:
        """Distances between consecutive frame origins (q-invariant)."""
        return np.hypot(self.dh[:, 0], self.dh[:, 1])

    def clip(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.lower, self.upper)


@dataclass(frozen=True)
class ArmGeometry:
    """Frame origins of the chain for one joint configuration.

    ``joint_positions`` has 7 rows: the base origin followed by the origin of
    each joint frame; the last row is the end effector. ``link_segments``
    has shape ``(5, 2, 3)`` and skips the base pedestal (row 0 to row 1).
    """

    joint_positions: np.ndarray

    @property
    def ee_position(self) -> np.ndarray:
        return self.joint_positions[-1]

    @property
    def link_segments(self) -> np.ndarray:
        p = self.joint_positions
        return np.stack([p[1:-1], p[2:]], axis=1)


def forward_kinematics(model: ArmModel, q: np.ndarray, check_limits: bool = True) -> ArmGeometry:
    """Chain the DH transforms for joint angles ``q``."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (N_JOINTS,):
        raise ValueError(f"expected {N_JOINTS} joint angles, got shape {q.shape}")
    if check_limits and (np.any(q < model.lower - 1e-12) or np.any(q > model.upper + 1e-12)):
        raise JointLimitError(f"joint configuration {q} outside limits")
    theta = q + model.dh[:, 3]
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = model._cos_alpha, model._sin_alpha
    d, a = model.dh[:, 0], model.dh[:, 1]
    R = np.eye(3)
    p = np.zeros(3)
    pts = np.empty((N_JOINTS + 1, 3))
    pts[0] = p
    for i in range(N_JOINTS):
        Ai = np.array([
            [ct[i], -st[i] * ca[i], st[i] * sa[i]],
            [st[i], ct[i] * ca[i], -ct[i] * sa[i]],
            [0.0, sa[i], ca[i]],
        ])
        p = p + R @ np.array([a[i] * ct[i], a[i] * st[i], d[i]])
        R = R @ Ai
        pts[i + 1] = p
    return ArmGeometry(pts)


@dataclass(frozen=True)
class Workspace:
    """Sector of a spherical shell centred on the arm base.

    Points satisfy ``r_min <= |p| <= r_max``, azimuth in
    ``[az_min, az_max]`` (compared modulo 2 pi) and ``z >= floor``.

    The default quarter faces the arm's home reach direction (the UR5e's
    zero pose points along -x, azimuth about -164 deg). Every target there
    has an inverse-kinematics solution with the base joint well inside its
    limits, so the target-to-joint map has no branch switch.
    """

    r_min: float = 0.4
    r_max: float = 0.95
    az_min: float = -math.pi
    az_max: float = -math.pi / 2
    floor: float = 0.0

    def __post_init__(self):
        if not 0 <= self.r_min <= self.r_max:
            raise ValueError("need 0 <= r_min <= r_max")
        if not 0 <= self.az_max - self.az_min <= 2 * math.pi:
            raise ValueError("need az_min <= az_max <= az_min + 2 pi")
        if self.floor >= self.r_max:
            raise ValueError("floor lies above the shell")

    def contains(self, p: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        p = np.asarray(p)
        r = np.linalg.norm(p, axis=-1)
        # angle past az_min, wrapped into [-tol, 2 pi - tol)
        rel = np.mod(np.arctan2(p[..., 1], p[..., 0]) - self.az_min + tol, 2 * math.pi) - tol
        return (
            (r >= self.r_min - tol)
            & (r <= self.r_max + tol)
            & (rel <= self.az_max - self.az_min + tol)
            & (p[..., 2] >= self.floor - tol)
        )

    def mean_radius(self) -> float:
        """Mean distance from the origin under uniform volume sampling."""
        lo, hi = self.r_min, self.r_max
        if hi == lo:
            return hi
        return 0.75 * (hi**4 - lo**4) / (hi**3 - lo**3)


def _draw_shell_point(ws: Workspace, rng: np.random.Generator) -> np.ndarray:
    lo3, hi3 = ws.r_min**3, ws.r_max**3
    for _ in range(1000):
        u, az, cz = rng.random(3)
        r = np.cbrt(lo3 + u * (hi3 - lo3))
        az = ws.az_min + az * (ws.az_max - ws.az_min)
        # z/r uniform on [-1, 1] gives a uniform direction; start at 0 when the floor allows it
        cz_lo = 0.0 if ws.floor >= 0 else -1.0
        cz = cz_lo + cz * (1.0 - cz_lo)
        sz = math.sqrt(max(0.0, 1.0 - cz * cz))
        p = r * np.array([sz * math.cos(az), sz * math.sin(az), cz])
        if p[2] >= ws.floor:
            return p
    raise SamplingError("could not place a point above the workspace floor")


def sample_target(ws: Workspace, rng: np.random.Generator) -> np.ndarray:
    """Uniform random point in the workspace volume."""
    return _draw_shell_point(ws, rng)


def sample_obstacles(
    ws: Workspace,
    count: int,
    radius: float,
    target: np.ndarray,
    rng: np.random.Generator,
    clearance: float = 0.05,
    model: ArmModel | None = None,
    home_q: np.ndarray = HOME_Q,
    max_attempts: int = 1000,
) -> list:
    """Place ``count`` spheres in the workspace by rejection sampling.

    Each center keeps ``radius + clearance`` away from the target and from
    the links of the arm in its home pose.
    """
    from .geometry import ObstacleSphere, segments_distance

    if count < 0:
        raise ValueError("count must be non-negative")
    model = model or ArmModel()
    segs = forward_kinematics(model, home_q, check_limits=False).link_segments
    keep_out = radius + clearance
    target = np.asarray(target, dtype=np.float64)
    out = []
    for _ in range(count):
        for _ in range(max_attempts):
            c = _draw_shell_point(ws, rng)
            if np.linalg.norm(c - target) < keep_out:
                continue
            if segments_distance(c, segs).min() < keep_out:
                continue
            out.append(ObstacleSphere(c, radius))
            break
        else:
            raise SamplingError(f"no obstacle placement after {max_attempts} attempts")
    return out
