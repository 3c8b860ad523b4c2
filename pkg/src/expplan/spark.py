"""Box-pair workspace decomposition, its similarity metric and the proximity criticality test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    BoxObstacle,
    ConvexShape,
    Pose,
    gjk_distance,
    obb_separation,
    orientation_gap,
    pose_distance,
    quat_from_axis_angle,
    quat_multiply,
)


@dataclass(frozen=True)
class SparkConfig:
    w_T: float = 0.75
    w_s: float = 0.5
    d_pairs: float = 0.2
    d_clust: float = 0.15
    d_radius: float = 0.4

    def __post_init__(self):
        for name in ("w_T", "w_s"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("d_pairs", "d_clust", "d_radius"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")


def _box_features(box: BoxObstacle) -> tuple[float, ...]:
    return (*box.pose.translation.tolist(), *box.pose.orientation.tolist(), *box.size.tolist())


def _canonical_key(box: BoxObstacle) -> tuple[float, ...]:
    return (*box.pose.translation.tolist(), *box.size.tolist(), *box.pose.orientation.tolist())


def _feature_distance(f, g, w_T: float, w_s: float) -> float:
    dx, dy, dz = f[0] - g[0], f[1] - g[1], f[2] - g[2]
    se3 = w_T * math.sqrt(dx * dx + dy * dy + dz * dz) + (1.0 - w_T) * orientation_gap(f[3:7], g[3:7])
    sx, sy, sz = f[7] - g[7], f[8] - g[8], f[9] - g[9]
    return w_s * se3 + (1.0 - w_s) * math.sqrt(sx * sx + sy * sy + sz * sz)


class SparkPrimitive:
    """Unordered pair of boxes, stored in canonical order.

    Canonical order is lexicographic on translation, then size, then
    orientation, so equal pairs hash and serialize identically.
    """

    __slots__ = ("box_a", "box_b", "features", "key")

    def __init__(self, box_a: BoxObstacle, box_b: BoxObstacle):
        if _canonical_key(box_b) < _canonical_key(box_a):
            box_a, box_b = box_b, box_a
        self.box_a = box_a
        self.box_b = box_b
        self.features = (_box_features(box_a), _box_features(box_b))
        self.key = ("spark", _canonical_key(box_a), _canonical_key(box_b))

    @property
    def boxes(self) -> tuple[BoxObstacle, BoxObstacle]:
        return self.box_a, self.box_b

    def __eq__(self, other) -> bool:
        return isinstance(other, SparkPrimitive) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __repr__(self) -> str:
        return f"SparkPrimitive({self.box_a!r}, {self.box_b!r})"


def spark_box_distance(wi: BoxObstacle, wj: BoxObstacle, cfg: SparkConfig = SparkConfig()) -> float:
    """``w_s * d_SE3(T_i, T_j) + (1 - w_s) * |s_i - s_j|``."""
    se3 = pose_distance(wi.pose, wj.pose, cfg.w_T)
    return cfg.w_s * se3 + (1.0 - cfg.w_s) * float(np.linalg.norm(wi.size - wj.size))


def spark_decompose(scene, cfg: SparkConfig = SparkConfig()) -> list[SparkPrimitive]:
    """All unordered box pairs closer than ``d_pairs`` under the box metric."""
    boxes = list(scene)
    feats = [_box_features(b) for b in boxes]
    prims = []
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            if _feature_distance(feats[i], feats[j], cfg.w_T, cfg.w_s) < cfg.d_pairs:
                prims.append(SparkPrimitive(boxes[i], boxes[j]))
    prims.sort(key=lambda p: p.key)
    return prims


def spark_primitive_distance(li: SparkPrimitive, lj: SparkPrimitive, cfg: SparkConfig = SparkConfig()) -> float:
    """Cheaper of the two box matchings between the pairs."""
    (ai, bi), (aj, bj) = li.features, lj.features
    w_T, w_s = cfg.w_T, cfg.w_s
    direct = _feature_distance(ai, aj, w_T, w_s) + _feature_distance(bi, bj, w_T, w_s)
    cross = _feature_distance(ai, bj, w_T, w_s) + _feature_distance(bi, aj, w_T, w_s)
    return min(direct, cross)


def _feature_bound(f, g, w_T: float, w_s: float) -> float:
    dx, dy, dz = f[0] - g[0], f[1] - g[1], f[2] - g[2]
    sx, sy, sz = f[7] - g[7], f[8] - g[8], f[9] - g[9]
    return w_s * w_T * math.sqrt(dx * dx + dy * dy + dz * dz) + (1.0 - w_s) * math.sqrt(sx * sx + sy * sy + sz * sz)


def spark_primitive_bound(li: SparkPrimitive, lj: SparkPrimitive, cfg: SparkConfig = SparkConfig()) -> float:
    """Lower bound on ``spark_primitive_distance`` that is a true metric.

    It drops the orientation term, which only obeys a relaxed triangle
    inequality. A metric index built on this bound answers range queries
    exactly once candidates are filtered with the full distance.
    """
    (ai, bi), (aj, bj) = li.features, lj.features
    w_T, w_s = cfg.w_T, cfg.w_s
    direct = _feature_bound(ai, aj, w_T, w_s) + _feature_bound(bi, bj, w_T, w_s)
    cross = _feature_bound(ai, bj, w_T, w_s) + _feature_bound(bi, aj, w_T, w_s)
    return min(direct, cross)


def spark_is_critical(chain, q, prim: SparkPrimitive, cfg: SparkConfig = SparkConfig()) -> bool:
    """True iff some robot box lies closer than ``d_clust`` to either box of the pair."""
    robot = [b.hull() for b in chain.robot_boxes(np.asarray(q, dtype=float))]
    targets = [prim.box_a.hull(), prim.box_b.hull()]
    return min(gjk_distance(r, t) for r in robot for t in targets) < cfg.d_clust


_CORNER_SIGNS = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=float)


def spark_critical_matrix(chain, configs, prims, cfg: SparkConfig = SparkConfig()) -> np.ndarray:
    """Criticality of every configuration against every primitive, shape (n_configs, n_prims).

    Separating-axis gaps give a lower bound on each box-pair distance; GJK
    runs only on pairs the bound cannot decide.
    """
    configs = np.atleast_2d(np.asarray(configs, dtype=float))
    out = np.zeros((len(configs), len(prims)), dtype=bool)
    if not prims or len(configs) == 0 or chain.box_count == 0:
        return out
    F = chain.box_frames(configs)
    rc, rR, rh = F[..., :3, 3], F[..., :3, :3], chain._box_half
    boxes = [b for p in prims for b in p.boxes]
    oc = np.array([b.center for b in boxes])
    oR = np.array([b.pose.rotation for b in boxes])
    oh = np.array([b.half_extents for b in boxes])
    lb = obb_separation(rc[:, :, None], rR[:, :, None], rh[None, :, None], oc[None, None], oR[None, None], oh[None, None])
    lb = lb.reshape(len(configs), chain.box_count, len(prims), 2)
    lb = np.moveaxis(lb, 2, 1).reshape(len(configs), len(prims), -1)
    hulls = [b.hull() for b in boxes]
    robot_local = _CORNER_SIGNS[None] * rh[:, None, :]
    for c, p in zip(*np.nonzero(np.min(lb, axis=2) < cfg.d_clust)):
        bounds = lb[c, p]
        if np.min(bounds) <= 0.0:
            out[c, p] = True
            continue
        for flat in np.argsort(bounds):
            if bounds[flat] >= cfg.d_clust:
                break
            k, side = divmod(int(flat), 2)
            verts = robot_local[k] @ rR[c, k].T + rc[c, k]
            if gjk_distance(ConvexShape(verts), hulls[2 * p + side]) < cfg.d_clust:
                out[c, p] = True
                break
    return out


def _random_rotation(rng, max_angle: float) -> np.ndarray:
    axis = rng.standard_normal(3)
    return quat_from_axis_angle(axis / np.linalg.norm(axis), rng.uniform(0.0, max_angle))


def random_spark_primitive(rng, cfg: SparkConfig = SparkConfig(), extent: float = 1.0) -> SparkPrimitive:
    """A random box pair that would pass the pairing threshold.

    The first box is uniform in ``[-extent, extent]^3`` with a uniform random
    rotation; the second is a small perturbation of it, redrawn until the
    pair distance falls below ``d_pairs``.
    """
    a = BoxObstacle(Pose(rng.uniform(-extent, extent, 3), _random_rotation(rng, np.pi)), rng.uniform(0.02, 0.5, 3))
    while True:
        t = a.pose.translation + rng.normal(scale=0.08, size=3)
        q = quat_multiply(a.pose.orientation, _random_rotation(rng, 0.5))
        s = np.clip(a.size + rng.normal(scale=0.08, size=3), 0.01, None)
        b = BoxObstacle(Pose(t, q), s)
        if spark_box_distance(a, b, cfg) < cfg.d_pairs:
            return SparkPrimitive(a, b)
