"""Rigid transforms, posed boxes, convex hulls and the distance queries built on them.

Quaternions are stored as (w, x, y, z) and normalized on construction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

GJK_TOLERANCE = 1e-9
GJK_MAX_ITERATIONS = 128
# below this norm the closest point of the Minkowski difference is the origin
_CONTACT_EPS = 1e-10


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n < 1e-12:
        raise ValueError(f"cannot normalize quaternion {q!r}")
    # leave unit quaternions untouched so save/load round trips are bit-exact
    return q.copy() if abs(n - 1.0) < 1e-12 else q / n


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=float)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    s = math.sin(angle / 2.0)
    return np.array([math.cos(angle / 2.0), *(axis * s)])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R) -> np.ndarray:
    """Rotation matrix to a unit quaternion with non-negative w (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = quat_normalize(q)
    return -q if q[0] < 0 else q


def rotation_vector(R) -> np.ndarray:
    """Axis-angle vector of a rotation matrix."""
    q = matrix_to_quat(R)
    v = q[1:]
    s = np.linalg.norm(v)
    if s < 1e-12:
        return 2.0 * v
    angle = 2.0 * math.atan2(s, q[0])
    return v / s * angle


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: ``x_parent = R(orientation) @ x_child + translation``."""

    translation: np.ndarray
    orientation: np.ndarray

    def __init__(self, translation=(0.0, 0.0, 0.0), orientation=(1.0, 0.0, 0.0, 0.0)):
        t = np.asarray(translation, dtype=float)
        if t.shape != (3,):
            raise ValueError(f"translation must have shape (3,), got {t.shape}")
        q = np.asarray(orientation, dtype=float)
        if q.shape != (4,):
            raise ValueError(f"orientation must have shape (4,), got {q.shape}")
        object.__setattr__(self, "translation", _readonly(t))
        object.__setattr__(self, "orientation", _readonly(quat_normalize(q)))

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_matrix(cls, m) -> Pose:
        m = np.asarray(m, dtype=float)
        return cls(m[:3, 3], matrix_to_quat(m[:3, :3]))

    @classmethod
    def from_xyz_yaw(cls, xyz, yaw: float = 0.0) -> Pose:
        return cls(xyz, quat_from_axis_angle((0.0, 0.0, 1.0), yaw))

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: Pose) -> Pose:
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        t = self.translation + self.rotation @ other.translation
        return Pose(t, quat_multiply(self.orientation, other.orientation))

    __matmul__ = compose

    def inverse(self) -> Pose:
        qi = quat_conjugate(self.orientation)
        return Pose(-(quat_to_matrix(qi) @ self.translation), qi)

    def transform_points(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.translation, other.translation)
                    and np.array_equal(self.orientation, other.orientation))

    def __hash__(self) -> int:
        return hash((self.translation.tobytes(), self.orientation.tobytes()))

    def __repr__(self) -> str:
        return f"Pose(translation={self.translation.tolist()}, orientation={self.orientation.tolist()})"


_UNIT_CORNERS = np.array(list(itertools.product((-0.5, 0.5), repeat=3)))


@dataclass(frozen=True, eq=False)
class BoxObstacle:
    """A posed box; ``size`` holds full edge lengths along the box's local axes."""

    pose: Pose
    size: np.ndarray

    def __init__(self, pose: Pose, size):
        s = np.asarray(size, dtype=float)
        if s.shape != (3,):
            raise ValueError(f"size must have shape (3,), got {s.shape}")
        if not np.all(s > 0):
            raise ValueError(f"box size components must be positive, got {s.tolist()}")
        object.__setattr__(self, "pose", pose)
        object.__setattr__(self, "size", _readonly(s))

    @classmethod
    def axis_aligned(cls, center, size) -> BoxObstacle:
        return cls(Pose(center), size)

    @property
    def center(self) -> np.ndarray:
        return self.pose.translation

    @property
    def half_extents(self) -> np.ndarray:
        return self.size / 2.0

    def corners(self) -> np.ndarray:
        return self.pose.transform_points(_UNIT_CORNERS * self.size)

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        ext = np.abs(self.pose.rotation) @ self.half_extents
        return self.center - ext, self.center + ext

    def hull(self) -> ConvexShape:
        return ConvexShape(_UNIT_CORNERS * self.size, self.pose)

    def transformed(self, pose: Pose) -> BoxObstacle:
        """The same box re-expressed after applying ``pose`` on the left."""
        return BoxObstacle(pose @ self.pose, self.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BoxObstacle):
            return NotImplemented
        return self.pose == other.pose and bool(np.array_equal(self.size, other.size))

    def __hash__(self) -> int:
        return hash((self.pose, self.size.tobytes()))

    def __repr__(self) -> str:
        return f"BoxObstacle(pose={self.pose!r}, size={self.size.tolist()})"


class ConvexShape:
    """Convex hull of a vertex list placed by a pose."""

    def __init__(self, vertices, pose: Pose | None = None):
        v = np.atleast_2d(np.asarray(vertices, dtype=float))
        if v.ndim != 2 or v.shape[1] != 3 or len(v) < 1:
            raise ValueError("a convex shape needs at least one 3D vertex")
        self.pose = pose if pose is not None else Pose.identity()
        self.local_vertices = _readonly(v)
        self.vertices = _readonly(self.pose.transform_points(v))

    def support(self, direction) -> np.ndarray:
        return self.vertices[int(np.argmax(self.vertices @ direction))]

    def translated(self, offset) -> ConvexShape:
        return ConvexShape(self.vertices + np.asarray(offset, dtype=float))


def pose_distance(a: Pose, b: Pose, w_T: float) -> float:
    """Weighted translation/orientation pose distance.

    ``w_T * |t_a - t_b| + (1 - w_T) * (1 - <q_a, q_b>^2)``; the squared inner
    product makes it blind to quaternion sign.
    """
    dx, dy, dz = (a.translation - b.translation).tolist()
    return (w_T * math.sqrt(dx * dx + dy * dy + dz * dz)
            + (1.0 - w_T) * orientation_gap(a.orientation.tolist(), b.orientation.tolist()))


def orientation_gap(qa, qb) -> float:
    """``1 - <qa, qb>^2`` for unit quaternions, via Lagrange's identity.

    Summing squared 2x2 minors instead of subtracting from 1 makes the value
    exactly 0 for equal inputs and exactly invariant to sign and argument order.
    """
    a0, a1, a2, a3 = qa
    b0, b1, b2, b3 = qb
    m01 = a0 * b1 - a1 * b0
    m02 = a0 * b2 - a2 * b0
    m03 = a0 * b3 - a3 * b0
    m12 = a1 * b2 - a2 * b1
    m13 = a1 * b3 - a3 * b1
    m23 = a2 * b3 - a3 * b2
    return m01 * m01 + m02 * m02 + m03 * m03 + m12 * m12 + m13 * m13 + m23 * m23


def _closest_on_simplex(points: list[np.ndarray]) -> tuple[np.ndarray, list[int]]:
    """Closest point to the origin on conv(points) and the indices of its support face.

    Enumerates every face, projects the origin onto its affine hull and keeps
    the smallest projection with strictly positive barycentric coordinates.
    """
    n = len(points)
    best_v = points[0]
    best_idx = [0]
    best_nn = float(points[0] @ points[0])
    for size in range(1, n + 1):
        for idx in itertools.combinations(range(n), size):
            p0 = points[idx[0]]
            if size == 1:
                v = p0
                lam = None
            else:
                E = np.array([points[i] - p0 for i in idx[1:]])
                G = E @ E.T
                if abs(np.linalg.det(G)) < 1e-18 * max(1.0, float(np.trace(G)) ** (size - 1)):
                    continue
                mu = np.linalg.solve(G, -(E @ p0))
                lam = 1.0 - mu.sum()
                if lam <= 0.0 or np.any(mu <= 0.0):
                    continue
                v = p0 + mu @ E
            nn = float(v @ v)
            if nn < best_nn:
                best_v, best_idx, best_nn = v, list(idx), nn
    return best_v, best_idx


def gjk_distance(a: ConvexShape, b: ConvexShape, tol: float = GJK_TOLERANCE,
                 max_iter: int = GJK_MAX_ITERATIONS) -> float:
    """Euclidean separation of two convex hulls; exactly 0.0 on contact or overlap."""
    va, vb = a.vertices, b.vertices

    def support(d):
        return va[int(np.argmax(va @ d))] - vb[int(np.argmin(vb @ d))]

    v = va[0] - vb[0]
    simplex = [v]
    lower = 0.0
    for _ in range(max_iter):
        vv = float(v @ v)
        if vv <= _CONTACT_EPS * _CONTACT_EPS:
            return 0.0
        vn = math.sqrt(vv)
        w = support(-v)
        vw = float(v @ w)
        lower = max(lower, vw / vn)
        # upper bound |v| minus lower bound v.w/|v| on the separation
        if vn - vw / vn <= tol:
            return vn
        if any(np.array_equal(w, p) for p in simplex):
            return vn
        simplex.append(w)
        v, keep = _closest_on_simplex(simplex)
        simplex = [simplex[i] for i in keep]
        if len(simplex) == 4:
            return 0.0
    # iteration cap: the lower bound never overstates the gap
    return max(lower, 0.0)


def aabb_intersects(a, b) -> bool:
    """True iff two axis-aligned bounds overlap or touch.

    Accepts ``BoxObstacle`` (its AABB is used) or ``(lo, hi)`` pairs.
    """
    alo, ahi = a.aabb() if isinstance(a, BoxObstacle) else a
    blo, bhi = b.aabb() if isinstance(b, BoxObstacle) else b
    return bool(np.all(alo <= bhi) and np.all(blo <= ahi))


def aabb_gap(alo, ahi, blo, bhi) -> np.ndarray:
    """Euclidean gap between axis-aligned bounds (broadcasts over leading axes)."""
    d = np.maximum(0.0, np.maximum(np.asarray(alo) - bhi, np.asarray(blo) - ahi))
    return np.sqrt(np.sum(d * d, axis=-1))


def obb_aabb_extents(R: np.ndarray, half: np.ndarray) -> np.ndarray:
    """Half-extents of the AABB around oriented boxes (``R``: (..., 3, 3))."""
    return np.einsum("...ij,...j->...i", np.abs(R), half)


def obb_separation(ca, Ra, ha, cb, Rb, hb) -> np.ndarray:
    """Largest separating-axis gap between oriented boxes, broadcast over leading axes.

    Columns of ``R`` are the box axes. A positive value is a lower bound on the
    Euclidean distance; values <= 0 mean the boxes overlap or touch.
    """
    R = np.einsum("...ki,...kj->...ij", Ra, Rb)
    absR = np.abs(R) + 1e-12
    t = np.einsum("...ki,...k->...i", Ra, cb - ca)
    ha = np.asarray(ha)
    hb = np.asarray(hb)
    gaps = []
    # face axes of A
    gaps.append(np.abs(t) - ha - np.einsum("...ij,...j->...i", absR, hb))
    # face axes of B
    tb = np.einsum("...i,...ij->...j", t, R)
    gaps.append(np.abs(tb) - np.einsum("...i,...ij->...j", ha, absR) - hb)
    # edge-edge axes A_i x B_j, normalized so the gap is metric
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            ra = ha[..., i1] * absR[..., i2, j] + ha[..., i2] * absR[..., i1, j]
            rb = hb[..., j1] * absR[..., i, j2] + hb[..., j2] * absR[..., i, j1]
            proj = t[..., i2] * R[..., i1, j] - t[..., i1] * R[..., i2, j]
            norm = np.sqrt(np.maximum(1.0 - R[..., i, j] ** 2, 0.0))
            gap = np.where(norm > 1e-6, (np.abs(proj) - ra - rb) / np.maximum(norm, 1e-6), -np.inf)
            gaps.append(gap[..., None])
    return np.max(np.concatenate(gaps, axis=-1), axis=-1)


def obb_overlap(ca, Ra, ha, cb, Rb, hb) -> np.ndarray:
    """Oriented-box intersection test (touching counts), broadcast over leading axes."""
    return obb_separation(ca, Ra, ha, cb, Rb, hb) <= 0.0
