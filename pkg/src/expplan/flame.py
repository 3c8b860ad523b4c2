"""Octree occupancy built in the robot base frame, decomposed into 4x4x4 octoboxes.

Leaf ``(i, j, k)`` covers ``origin + r * [i, i+1] x [j, j+1] x [k, k+1]``.
Inside an octobox, voxel ``(x, y, z)`` maps to bit ``16 * x + 4 * y + z`` of
the 64-bit occupancy word (x-major, then y, then z). Child octants of an
octree node use the same ordering, ``4 * x + 2 * y + z``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Pose, obb_aabb_extents, obb_overlap, obb_separation

DEFAULT_RESOLUTION = 0.05
DEFAULT_DEPTH = 6
DEFAULT_CENTER = (0.0, 0.0, 0.8)
BLOCK = 4
FULL_BLOCK = (1 << 64) - 1
# interiors must overlap by more than this to occupy a leaf
_RASTER_EPS = 1e-9

_BIT_WEIGHTS = (np.uint64(1) << np.arange(64, dtype=np.uint64)).reshape(BLOCK, BLOCK, BLOCK)


class Octree:
    """Binary occupancy octree over a cube of side ``resolution * 2**depth``.

    Nodes are ``True`` (fully occupied), ``False`` (free) or a tuple of eight
    children; a node collapses only when all of its children agree.
    """

    def __init__(self, root, origin, resolution: float, depth: int):
        self.root = root
        self.origin = np.asarray(origin, dtype=float)
        self.resolution = float(resolution)
        self.depth = int(depth)

    @classmethod
    def from_grid(cls, grid: np.ndarray, origin, resolution: float) -> Octree:
        n = grid.shape[0]
        depth = int(round(np.log2(n)))
        if grid.shape != (n, n, n) or 2 ** depth != n:
            raise ValueError("occupancy grid must be a cube with power-of-two side")
        return cls(_collapse(np.asarray(grid, dtype=bool)), origin, resolution, depth)

    @property
    def cells_per_side(self) -> int:
        return 2 ** self.depth

    @property
    def side(self) -> float:
        return self.resolution * self.cells_per_side

    @property
    def origin_pose(self) -> Pose:
        return Pose(self.origin)

    def node_count(self) -> int:
        def count(node):
            return 1 if isinstance(node, bool) else 1 + sum(count(c) for c in node)
        return count(self.root)

    def leaves(self) -> np.ndarray:
        """Dense boolean leaf occupancy, indexed ``[i, j, k]``."""
        n = self.cells_per_side
        grid = np.zeros((n, n, n), dtype=bool)

        def fill(node, lo, size):
            if node is False:
                return
            if node is True:
                grid[lo[0]:lo[0] + size, lo[1]:lo[1] + size, lo[2]:lo[2] + size] = True
                return
            h = size // 2
            for c, child in enumerate(node):
                fill(child, (lo[0] + h * (c >> 2), lo[1] + h * ((c >> 1) & 1), lo[2] + h * (c & 1)), h)

        fill(self.root, (0, 0, 0), n)
        return grid

    def occupied_count(self) -> int:
        return int(self.leaves().sum())


def _collapse(grid: np.ndarray):
    if grid.all():
        return True
    if not grid.any():
        return False
    h = grid.shape[0] // 2
    return tuple(
        _collapse(grid[x * h:(x + 1) * h, y * h:(y + 1) * h, z * h:(z + 1) * h])
        for x in (0, 1) for y in (0, 1) for z in (0, 1)
    )


def _domain_origin(center, resolution: float, depth: int) -> np.ndarray:
    return np.asarray(center, dtype=float) - 0.5 * resolution * 2 ** depth


def rasterize(obstacles, resolution: float = DEFAULT_RESOLUTION, depth: int = DEFAULT_DEPTH,
              center=DEFAULT_CENTER) -> np.ndarray:
    """Dense leaf occupancy: a leaf is occupied iff its cell overlaps an obstacle's interior."""
    n = 2 ** depth
    origin = _domain_origin(center, resolution, depth)
    top = origin + resolution * n
    grid = np.zeros((n, n, n), dtype=bool)
    for idx, box in enumerate(obstacles):
        R = box.pose.rotation
        ext = obb_aabb_extents(R, box.half_extents)
        lo, hi = box.center - ext, box.center + ext
        if np.any(lo < origin - _RASTER_EPS) or np.any(hi > top + _RASTER_EPS):
            raise ValueError(
                f"obstacle {idx} ({box!r}) extends outside the octree domain "
                f"[{origin.tolist()}, {top.tolist()}]"
            )
        i0 = np.clip(np.floor((lo - origin) / resolution).astype(int), 0, n - 1)
        i1 = np.clip(np.floor((hi - origin) / resolution).astype(int), 0, n - 1)
        axes = [np.arange(a, b + 1) for a, b in zip(i0, i1)]
        I, J, K = np.meshgrid(*axes, indexing="ij")
        cells = np.stack([I.ravel(), J.ravel(), K.ravel()], axis=1)
        centers = origin + (cells + 0.5) * resolution
        sep = obb_separation(centers, np.eye(3), np.full(3, resolution / 2), box.center, R, box.half_extents)
        hit = cells[sep < -_RASTER_EPS]
        grid[hit[:, 0], hit[:, 1], hit[:, 2]] = True
    return grid


def build_octree(obstacles=None, points=None, resolution: float = DEFAULT_RESOLUTION,
                 depth: int = DEFAULT_DEPTH, center=DEFAULT_CENTER, dropout: float = 0.0,
                 rng=None) -> Octree:
    """Occupancy octree from box obstacles and/or a point set (robot base frame).

    ``dropout`` clears that fraction of occupied leaves at random, imitating
    partial sensor coverage.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    n = 2 ** depth
    origin = _domain_origin(center, resolution, depth)
    grid = rasterize(obstacles or [], resolution, depth, center)
    if points is not None:
        pts = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, 3)
        idx = np.floor((pts - origin) / resolution).astype(int)
        bad = np.nonzero(np.any((idx < 0) | (idx >= n), axis=1))[0]
        if len(bad):
            raise ValueError(f"points outside the octree domain: {pts[bad[:5]].tolist()}")
        grid[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    if dropout > 0.0:
        occ = np.argwhere(grid)
        rng = np.random.default_rng(rng)
        drop = rng.random(len(occ)) < dropout
        grid[tuple(occ[drop].T)] = False
    return Octree.from_grid(grid, origin, resolution)


def load_points(path) -> np.ndarray:
    """Read a point file: one ``x y z`` triple per line, ``#`` starts a comment.

    Commas are accepted as separators.
    """
    pts = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].replace(",", " ").strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 coordinates, got {len(parts)}")
        pts.append([float(p) for p in parts])
    return np.array(pts, dtype=float).reshape(-1, 3)


def save_points(path, points) -> None:
    lines = ["# x y z (meters, robot base frame)"]
    lines += [f"{x!r} {y!r} {z!r}" for x, y, z in np.asarray(points, dtype=float).tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class FlamePrimitive:
    """A non-empty 4x4x4 block of leaves: lattice index plus occupancy word."""

    grid_index: tuple[int, int, int]
    occupancy: int
    origin: tuple[float, float, float]
    resolution: float

    def __post_init__(self):
        if not 0 < self.occupancy <= FULL_BLOCK:
            raise ValueError("octobox occupancy must be a non-zero 64-bit word")

    @property
    def key(self) -> tuple:
        return ("flame", self.grid_index, self.occupancy)

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.origin) + (BLOCK * np.asarray(self.grid_index) + BLOCK / 2) * self.resolution

    @property
    def pose(self) -> Pose:
        return Pose(self.center)

    @property
    def half_side(self) -> float:
        return BLOCK * self.resolution / 2

    def voxels(self) -> np.ndarray:
        """Occupancy as a (4, 4, 4) boolean array."""
        bits = (np.uint64(self.occupancy) & _BIT_WEIGHTS) != 0
        return bits

    def popcount(self) -> int:
        return bin(self.occupancy).count("1")


def block_word(block: np.ndarray) -> int:
    """64-bit occupancy word of a (4, 4, 4) boolean block."""
    return int(np.sum(_BIT_WEIGHTS[np.asarray(block, dtype=bool)], dtype=np.uint64))


def flame_decompose(octree: Octree) -> list[FlamePrimitive]:
    """Non-empty octoboxes, found by walking the tree down to two levels above the leaves."""
    if octree.depth < 2:
        raise ValueError("octree too shallow for 4x4x4 octoboxes")
    origin = tuple(octree.origin.tolist())
    res = octree.resolution
    target = octree.depth - 2
    out: list[FlamePrimitive] = []

    def leaves_of(node, size):
        block = np.zeros((size, size, size), dtype=bool)
        if node is True:
            block[:] = True
        elif node is not False:
            h = size // 2
            for c, child in enumerate(node):
                x, y, z = c >> 2, (c >> 1) & 1, c & 1
                block[x * h:(x + 1) * h, y * h:(y + 1) * h, z * h:(z + 1) * h] = leaves_of(child, h)
        return block

    def walk(node, level, idx):
        if node is False:
            return
        if level == target:
            word = FULL_BLOCK if node is True else block_word(leaves_of(node, BLOCK))
            out.append(FlamePrimitive(idx, word, origin, res))
            return
        for c in range(8):
            child = node if node is True else node[c]
            walk(child, level + 1, (2 * idx[0] + (c >> 2), 2 * idx[1] + ((c >> 1) & 1), 2 * idx[2] + (c & 1)))

    walk(octree.root, 0, (0, 0, 0))
    out.sort(key=lambda p: p.key)
    return out


def flame_key(prim: FlamePrimitive) -> tuple:
    """Exact-match key: equal keys mean distance 0, anything else is infinitely far."""
    return prim.key


def flame_distance(a: FlamePrimitive, b: FlamePrimitive) -> float:
    return 0.0 if flame_key(a) == flame_key(b) else float("inf")


def flame_is_critical(chain, q, prim: FlamePrimitive) -> bool:
    """True iff some robot box touches or enters the octobox's bounding cube."""
    return bool(flame_critical_matrix(chain, np.asarray(q, dtype=float)[None], [prim])[0, 0])


def flame_critical_matrix(chain, configs, prims) -> np.ndarray:
    configs = np.atleast_2d(np.asarray(configs, dtype=float))
    out = np.zeros((len(configs), len(prims)), dtype=bool)
    if not prims or len(configs) == 0 or chain.box_count == 0:
        return out
    F = chain.box_frames(configs)
    rc, rR, rh = F[..., :3, 3], F[..., :3, :3], chain._box_half
    ext = obb_aabb_extents(rR, rh)
    centers = np.array([p.center for p in prims])
    half = np.array([p.half_side for p in prims])[:, None]
    near = np.all(
        (np.abs(rc[:, :, None] - centers[None, None]) <= ext[:, :, None] + half[None, None]),
        axis=-1,
    )
    b, k, p = np.nonzero(near)
    if len(b):
        hit = obb_overlap(rc[b, k], rR[b, k], rh[k], centers[p], np.eye(3), np.repeat(half[p], 3, axis=1))
        out[b[hit], p[hit]] = True
    return out
