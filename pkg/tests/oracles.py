"""Independent reference implementations used as test oracles."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import lsq_linear

from expplan.geometry import BoxObstacle, Pose, quat_from_axis_angle


def random_quaternion(rng) -> np.ndarray:
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)


def _faces(box: BoxObstacle):
    """Each face as (origin, 3x2 basis, half-extents of the two free coordinates)."""
    R, c, h = box.pose.rotation, box.center, box.half_extents
    for k in range(3):
        i, j = [a for a in range(3) if a != k]
        for s in (-1.0, 1.0):
            yield c + s * h[k] * R[:, k], R[:, [i, j]], h[[i, j]]


def _surface_points(box: BoxObstacle, n: int) -> np.ndarray:
    out = []
    t = np.linspace(-1.0, 1.0, n)
    uu, vv = np.meshgrid(t, t, indexing="ij")
    for origin, basis, half in _faces(box):
        uv = np.stack([uu.ravel() * half[0], vv.ravel() * half[1]], axis=1)
        out.append(origin + uv @ basis.T)
    return np.concatenate(out)


def dense_box_distance(a: BoxObstacle, b: BoxObstacle, n: int = 15) -> float:
    """Distance between two boxes by dense surface sampling plus per-face-pair refinement.

    Sampling gives an upper bound; each of the 36 face pairs is then solved
    as a bounded linear least-squares problem, whose optimum is exact for
    that pair. Returns 0 if a corner of one box lies inside the other.
    """
    for p, q in ((a, b), (b, a)):
        local = (p.corners() - q.center) @ q.pose.rotation
        if np.any(np.all(np.abs(local) <= q.half_extents + 1e-12, axis=1)):
            return 0.0
    pa, pb = _surface_points(a, n), _surface_points(b, n)
    best = math.inf
    for chunk in np.array_split(pa, max(1, len(pa) // 256)):
        d = np.linalg.norm(chunk[:, None] - pb[None], axis=2).min()
        best = min(best, float(d))
    for (oa, Ba, ha), (ob, Bb, hb) in itertools.product(list(_faces(a)), list(_faces(b))):
        A = np.hstack([Ba, -Bb])
        lo = np.concatenate([-ha, -hb])
        res = lsq_linear(A, ob - oa, bounds=(lo, -lo), tol=1e-14, lsmr_tol="auto", method="bvls")
        best = min(best, float(np.linalg.norm(A @ res.x - (ob - oa))))
    return best


def brute_rasterize(boxes, origin, resolution: float, n: int, samples: int = 4) -> np.ndarray:
    """Leaf occupancy by testing each cell against each box with an exact SAT on axis-aligned cells.

    Independent of the library: a cell is occupied iff the open cell and the
    open box share a point, decided by 15-axis projection with an explicit
    positive-overlap requirement on every axis.
    """
    origin = np.asarray(origin, dtype=float)
    grid = np.zeros((n, n, n), dtype=bool)
    for box in boxes:
        R, c, h = box.pose.rotation, box.center, box.half_extents
        lo, hi = box.aabb()
        i0 = np.clip(np.floor((lo - origin) / resolution).astype(int) - 1, 0, n - 1)
        i1 = np.clip(np.floor((hi - origin) / resolution).astype(int) + 1, 0, n - 1)
        for idx in itertools.product(*[range(a, b + 1) for a, b in zip(i0, i1)]):
            cell_lo = origin + np.array(idx) * resolution
            cell_c = cell_lo + resolution / 2
            if _open_overlap(cell_c, np.eye(3), np.full(3, resolution / 2), c, R, h):
                grid[idx] = True
    return grid


def _open_overlap(ca, Ra, ha, cb, Rb, hb) -> bool:
    axes = [Ra[:, i] for i in range(3)] + [Rb[:, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            v = np.cross(Ra[:, i], Rb[:, j])
            if np.linalg.norm(v) > 1e-9:
                axes.append(v / np.linalg.norm(v))
    d = cb - ca
    for ax in axes:
        ra = np.sum(ha * np.abs(Ra.T @ ax))
        rb = np.sum(hb * np.abs(Rb.T @ ax))
        if abs(d @ ax) >= ra + rb - 1e-9:
            return False
    return True


def planar_two_link_ik(x: float, y: float, l1: float = 1.0, l2: float = 1.0):
    """Both elbow solutions of a planar 2-link arm reaching (x, y)."""
    c2 = (x * x + y * y - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    if abs(c2) > 1:
        return []
    out = []
    for s in (1.0, -1.0):
        t2 = s * math.acos(max(-1.0, min(1.0, c2)))
        t1 = math.atan2(y, x) - math.atan2(l2 * math.sin(t2), l1 + l2 * math.cos(t2))
        out.append((t1, t2))
    return out


def yaw_pose(xyz, yaw: float) -> Pose:
    return Pose(xyz, quat_from_axis_angle((0, 0, 1), yaw))
