"""Point-to-segment distances and obstacle clearance of the arm links."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEGENERATE_EPS = 1e-12


@dataclass(frozen=True)
class ObstacleSphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        if not self.radius > 0:
            raise ValueError("obstacle radius must be positive")


def line_param(p0, p1, p2) -> float:
    """Parameter ``t`` of the point on the infinite line ``p1 + t (p2 - p1)``
    closest to ``p0``. Not clamped.

    Raises ``ValueError`` for a degenerate segment.
    """
    p0, p1, p2 = (np.asarray(v, dtype=np.float64) for v in (p0, p1, p2))
    d = p2 - p1
    dd = d @ d
    if dd <= DEGENERATE_EPS**2:
        raise ValueError("degenerate segment: endpoints coincide")
    return -float((p1 - p0) @ d) / dd


def point_segment_distance(p0, p1, p2) -> float:
    """Shortest distance from ``p0`` to the segment ``[p1, p2]``."""
    p0, p1, p2 = (np.asarray(v, dtype=np.float64) for v in (p0, p1, p2))
    d = p2 - p1
    dd = d @ d
    if dd <= DEGENERATE_EPS**2:
        return float(np.linalg.norm(p0 - p1))
    t = min(max(-float((p1 - p0) @ d) / dd, 0.0), 1.0)
    return float(np.linalg.norm(p1 - p0 + t * d))


def segments_distance(p0: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Vectorized distance from one or more points to a stack of segments.

    Parameters
    ----------
    p0 : array, shape (3,) or (m, 3)
    segments : array, shape (k, 2, 3)

    Returns
    -------
    array, shape (k,) or (m, k)
    """
    p0 = np.asarray(p0, dtype=np.float64)
    p1, p2 = segments[:, 0], segments[:, 1]
    d = p2 - p1
    dd = np.einsum("kj,kj->k", d, d)
    w = p1 - p0[..., None, :]
    safe = np.where(dd > DEGENERATE_EPS**2, dd, 1.0)
    t = np.clip(-np.einsum("...kj,kj->...k", w, d) / safe, 0.0, 1.0)
    t = np.where(dd > DEGENERATE_EPS**2, t, 0.0)
    return np.linalg.norm(w + t[..., None] * d, axis=-1)


def obstacle_link_distances(segments: np.ndarray, obstacles) -> np.ndarray:
    """Surface distance from each obstacle to its nearest link, floored at 0.

    ``segments`` is the ``(5, 2, 3)`` link stack of an
    :class:`~reachppo.kinematics.ArmGeometry` (or the geometry itself).
    """
    segments = getattr(segments, "link_segments", segments)
    if not len(obstacles):
        return np.zeros(0)
    centers = np.array([o.center for o in obstacles])
    radii = np.array([o.radius for o in obstacles])
    nearest = segments_distance(centers, segments).min(axis=1)
    return np.maximum(0.0, nearest - radii)
