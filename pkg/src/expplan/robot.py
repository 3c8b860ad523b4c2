"""Serial-chain manipulator: kinematics, collision checking, edge validation and IK.

Chain convention (URDF-like): link ``i`` sits at
``T_i = T_{i-1} @ offset_i @ motion_i(q_i)`` with ``T_0`` the base pose. The
tool frame is ``T_ee @ tool``; attached objects ride on the tool frame.
Self-collision is not checked.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .geometry import BoxObstacle, Pose, obb_aabb_extents, obb_overlap, rotation_vector

EDGE_STEP = 0.05


@dataclass(frozen=True)
class Joint:
    name: str
    kind: str  # "revolute" | "prismatic"
    axis: np.ndarray
    offset: Pose
    limits: tuple[float, float]
    geometry: tuple[BoxObstacle, ...] = ()

    def __post_init__(self):
        if self.kind not in ("revolute", "prismatic"):
            raise ValueError(f"joint {self.name}: unknown kind {self.kind!r}")
        axis = np.asarray(self.axis, dtype=float)
        n = np.linalg.norm(axis)
        if n < 1e-12:
            raise ValueError(f"joint {self.name}: zero axis")
        object.__setattr__(self, "axis", axis / n)
        lo, hi = self.limits
        if not lo < hi:
            raise ValueError(f"joint {self.name}: limits must satisfy lo < hi, got {self.limits}")
        object.__setattr__(self, "limits", (float(lo), float(hi)))


@dataclass(frozen=True, eq=False)
class KinematicChain:
    joints: tuple[Joint, ...]
    base: Pose = field(default_factory=Pose.identity)
    base_geometry: tuple[BoxObstacle, ...] = ()
    end_effector: int = -1
    tool: Pose = field(default_factory=Pose.identity)
    attached: BoxObstacle | None = None
    name: str = "chain"
    named_configurations: dict = field(default_factory=dict)

    def __post_init__(self):
        ee = self.end_effector if self.end_effector >= 0 else len(self.joints)
        if not 0 <= ee <= len(self.joints):
            raise ValueError(f"end-effector link {self.end_effector} out of range")
        object.__setattr__(self, "end_effector", ee)
        self._build_geometry_tables()

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def link_count(self) -> int:
        return len(self.joints) + 1

    @property
    def lower(self) -> np.ndarray:
        return np.array([j.limits[0] for j in self.joints])

    @property
    def upper(self) -> np.ndarray:
        return np.array([j.limits[1] for j in self.joints])

    def within_limits(self, q) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.lower) and np.all(q <= self.upper))

    def named(self, name: str) -> np.ndarray:
        return np.array(self.named_configurations[name], dtype=float)

    def _build_geometry_tables(self):
        link_ids, local, half = [], [], []
        per_link = [self.base_geometry] + [j.geometry for j in self.joints]
        for i, boxes in enumerate(per_link):
            for box in boxes:
                link_ids.append(i)
                local.append(box.pose.matrix())
                half.append(box.half_extents)
        if self.attached is not None:
            # index link_count addresses the tool frame
            link_ids.append(self.link_count)
            local.append(self.attached.pose.matrix())
            half.append(self.attached.half_extents)
        object.__setattr__(self, "_box_link", np.array(link_ids, dtype=int))
        object.__setattr__(self, "_box_local", np.array(local).reshape(-1, 4, 4))
        object.__setattr__(self, "_box_half", np.array(half).reshape(-1, 3))
        object.__setattr__(self, "_offsets", np.array([j.offset.matrix() for j in self.joints]).reshape(-1, 4, 4))
        object.__setattr__(self, "_axes", np.array([j.axis for j in self.joints]).reshape(-1, 3))
        object.__setattr__(self, "_revolute", np.array([j.kind == "revolute" for j in self.joints], dtype=bool))

    @property
    def box_count(self) -> int:
        return len(self._box_link)

    def link_matrices(self, qs) -> np.ndarray:
        """Batched forward kinematics: (B, dof) -> (B, link_count + 1, 4, 4).

        The extra trailing frame is the tool frame.
        """
        qs = np.atleast_2d(np.asarray(qs, dtype=float))
        if qs.shape[1] != self.dof:
            raise ValueError(f"configuration has {qs.shape[1]} values, chain has {self.dof} joints")
        B = len(qs)
        out = np.empty((B, self.link_count + 1, 4, 4))
        T = np.broadcast_to(self.base.matrix(), (B, 4, 4)).copy()
        out[:, 0] = T
        eye = np.eye(3)
        for i in range(self.dof):
            a = self._axes[i]
            M = np.zeros((B, 4, 4))
            M[:, 3, 3] = 1.0
            if self._revolute[i]:
                K = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
                s = np.sin(qs[:, i])[:, None, None]
                c = np.cos(qs[:, i])[:, None, None]
                M[:, :3, :3] = eye + s * K + (1.0 - c) * (K @ K)
            else:
                M[:, :3, :3] = eye
                M[:, :3, 3] = qs[:, i, None] * a
            T = T @ self._offsets[i] @ M
            out[:, i + 1] = T
        out[:, -1] = out[:, self.end_effector] @ self.tool.matrix()
        return out

    def box_frames(self, qs) -> np.ndarray:
        """World transforms of every collision box, shape (B, box_count, 4, 4)."""
        frames = self.link_matrices(qs)
        return frames[:, self._box_link] @ self._box_local

    def robot_boxes(self, q) -> list[BoxObstacle]:
        """Collision boxes placed at ``q`` (including an attached object)."""
        frames = self.box_frames(q)[0]
        return [BoxObstacle(Pose.from_matrix(m), 2.0 * h) for m, h in zip(frames, self._box_half)]


def forward_kinematics(chain: KinematicChain, q) -> list[Pose]:
    """World poses of the base and every link at ``q``."""
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.dof,):
        raise ValueError(f"expected {chain.dof} joint values, got shape {q.shape}")
    mats = chain.link_matrices(q[None])[0, :-1]
    return [Pose.from_matrix(m) for m in mats]


def end_effector_pose(chain: KinematicChain, q) -> Pose:
    return Pose.from_matrix(chain.link_matrices(np.asarray(q, dtype=float)[None])[0, -1])


def attach_object(chain: KinematicChain, obj: BoxObstacle) -> KinematicChain:
    """Copy of ``chain`` carrying ``obj`` (expressed in the tool frame)."""
    return replace(chain, attached=obj)


class CollisionChecker:
    """Robot-versus-scene collision queries for one chain and one obstacle list.

    Broadphase on axis-aligned bounds, then an exact separating-axis test per
    surviving box pair. Holds no mutable state beyond the check counter.
    """

    def __init__(self, chain: KinematicChain, obstacles, step: float = EDGE_STEP):
        self.chain = chain
        self.obstacles = list(obstacles)
        self.step = step
        self.checks = 0
        if self.obstacles:
            self._c = np.array([o.center for o in self.obstacles])
            self._R = np.array([o.pose.rotation for o in self.obstacles])
            self._h = np.array([o.half_extents for o in self.obstacles])
            ext = obb_aabb_extents(self._R, self._h)
            self._lo, self._hi = self._c - ext, self._c + ext

    def collides(self, qs) -> np.ndarray:
        """Per-configuration collision flags for a (B, dof) batch."""
        qs = np.atleast_2d(qs)
        self.checks += len(qs)
        if not self.obstacles or self.chain.box_count == 0:
            return np.zeros(len(qs), dtype=bool)
        F = self.chain.box_frames(qs)
        c = F[..., :3, 3]
        R = F[..., :3, :3]
        h = self.chain._box_half
        ext = obb_aabb_extents(R, h)
        lo, hi = c - ext, c + ext
        near = np.all((lo[:, :, None] <= self._hi[None, None]) & (self._lo[None, None] <= hi[:, :, None]), axis=-1)
        b, k, o = np.nonzero(near)
        hit = np.zeros(len(qs), dtype=bool)
        if len(b):
            ov = obb_overlap(c[b, k], R[b, k], h[k], self._c[o], self._R[o], self._h[o])
            hit[b[ov]] = True
        return hit

    def is_valid(self, q) -> bool:
        q = np.asarray(q, dtype=float)
        return self.chain.within_limits(q) and not bool(self.collides(q[None])[0])

    def interpolate(self, a, b) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        # fixed endpoint order keeps edge checks exactly symmetric
        if tuple(b) < tuple(a):
            a, b = b, a
        n = max(1, int(math.ceil(float(np.max(np.abs(b - a))) / self.step)))
        t = np.linspace(0.0, 1.0, n + 1)[:, None]
        return a + (b - a) * t

    def edge_valid(self, a, b) -> bool:
        return not bool(np.any(self.collides(self.interpolate(a, b))))


def in_collision(chain: KinematicChain, q, scene) -> bool:
    return bool(CollisionChecker(chain, scene).collides(np.asarray(q, dtype=float)[None])[0])


def validate_edge(chain: KinematicChain, q_a, q_b, scene, step: float = EDGE_STEP) -> bool:
    return CollisionChecker(chain, scene, step).edge_valid(q_a, q_b)


def _pose_error(T: np.ndarray, target: np.ndarray, use_orientation: bool) -> np.ndarray:
    dp = target[:3, 3] - T[:3, 3]
    if not use_orientation:
        return dp
    return np.concatenate([dp, rotation_vector(target[:3, :3] @ T[:3, :3].T)])


def solve_ik(chain: KinematicChain, target: Pose, seed, tol=(1e-3, 1e-2), rng=None,
             restarts: int = 20, max_iter: int = 200, damping: float = 0.1,
             accept=None) -> np.ndarray | None:
    """Damped least-squares IK on the tool frame with random restarts.

    ``tol`` is ``(position, orientation)``; an orientation tolerance of None
    solves for position only. ``accept`` optionally filters solutions (e.g.
    collision-free). Returns None when the restart budget is exhausted.
    """
    pos_tol, ori_tol = tol
    use_ori = ori_tol is not None
    rng = np.random.default_rng(rng)
    lo, hi = chain.lower, chain.upper
    goal = target.matrix()
    h = 1e-6
    m = 6 if use_ori else 3
    q = np.clip(np.asarray(seed, dtype=float), lo, hi)
    for attempt in range(restarts + 1):
        if attempt > 0:
            q = rng.uniform(lo, hi)
        for _ in range(max_iter):
            probes = np.vstack([q, q + h * np.eye(chain.dof)])
            T = chain.link_matrices(probes)[:, -1]
            e = _pose_error(T[0], goal, use_ori)
            ok_pos = np.linalg.norm(e[:3]) < pos_tol
            ok_ori = not use_ori or np.linalg.norm(e[3:]) < ori_tol
            if ok_pos and ok_ori:
                if accept is None or accept(q):
                    return q
                break
            J = np.empty((m, chain.dof))
            for k in range(chain.dof):
                J[:, k] = (e - _pose_error(T[k + 1], goal, use_ori)) / h
            dq = J.T @ np.linalg.solve(J @ J.T + damping ** 2 * np.eye(m), e)
            step = np.max(np.abs(dq))
            if step > 0.5:
                dq *= 0.5 / step
            q = np.clip(q + dq, lo, hi)
            if step < 1e-10:
                break
    return None


def _pose_from_json(d) -> Pose:
    if d is None:
        return Pose.identity()
    return Pose(d.get("translation", (0.0, 0.0, 0.0)), d.get("orientation", (1.0, 0.0, 0.0, 0.0)))


def _box_from_json(d) -> BoxObstacle:
    return BoxObstacle(Pose(d["center"], d.get("orientation", (1.0, 0.0, 0.0, 0.0))), d["size"])


def chain_from_dict(d: dict) -> KinematicChain:
    joints = tuple(
        Joint(
            name=j["name"],
            kind=j["kind"],
            axis=np.array(j["axis"], dtype=float),
            offset=_pose_from_json(j.get("offset")),
            limits=tuple(j["limits"]),
            geometry=tuple(_box_from_json(b) for b in j.get("geometry", [])),
        )
        for j in d["joints"]
    )
    return KinematicChain(
        joints=joints,
        base=_pose_from_json(d.get("base")),
        base_geometry=tuple(_box_from_json(b) for b in d.get("base_geometry", [])),
        end_effector=int(d.get("end_effector", -1)),
        tool=_pose_from_json(d.get("tool")),
        name=d.get("name", "chain"),
        named_configurations={k: list(v) for k, v in d.get("configurations", {}).items()},
    )


def load_chain(source) -> KinematicChain:
    """Load a chain from a robot definition file, or a built-in name (``arm3``, ``arm8``)."""
    if isinstance(source, str) and source in BUILTIN_CHAINS:
        text = resources.files("expplan").joinpath("data").joinpath(f"{source}.json").read_text()
    else:
        text = Path(source).read_text()
    return chain_from_dict(json.loads(text))


BUILTIN_CHAINS = ("arm3", "arm8")
