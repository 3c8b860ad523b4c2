"""RRT-Connect with an injectable sampler, and random shortcutting."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

DEFAULT_RANGE = 0.75
SHORTCUT_ITERATIONS = 200

_TRAPPED, _ADVANCED, _REACHED = 0, 1, 2


@dataclass
class PlannerResult:
    outcome: str  # "solved" | "timeout"
    path: np.ndarray | None
    time: float
    iterations: int
    samples: int

    @property
    def solved(self) -> bool:
        return self.outcome == "solved"


class _Tree:
    def __init__(self, root: np.ndarray, capacity: int = 1024):
        self.nodes = np.empty((capacity, len(root)))
        self.parent = np.empty(capacity, dtype=int)
        self.nodes[0] = root
        self.parent[0] = -1
        self.n = 1

    def nearest(self, q: np.ndarray) -> int:
        d = self.nodes[: self.n] - q
        return int(np.argmin(np.einsum("ij,ij->i", d, d)))

    def add(self, q: np.ndarray, parent: int) -> int:
        if self.n == len(self.nodes):
            self.nodes = np.vstack([self.nodes, np.empty_like(self.nodes)])
            self.parent = np.concatenate([self.parent, np.empty_like(self.parent)])
        self.nodes[self.n] = q
        self.parent[self.n] = parent
        self.n += 1
        return self.n - 1

    def branch(self, i: int) -> list[np.ndarray]:
        """Configurations from node ``i`` back to the root."""
        out = []
        while i >= 0:
            out.append(self.nodes[i].copy())
            i = self.parent[i]
        return out


def _extend(tree: _Tree, q: np.ndarray, validity, step: float) -> tuple[int, int]:
    near = tree.nearest(q)
    q_near = tree.nodes[near]
    d = q - q_near
    dist = float(np.sqrt(d @ d))
    if dist <= step:
        q_new, status = q, _REACHED
    else:
        q_new, status = q_near + d * (step / dist), _ADVANCED
    if dist == 0.0:
        return _REACHED, near
    if not validity.edge_valid(q_near, q_new):
        return _TRAPPED, -1
    return status, tree.add(q_new, near)


def rrt_connect(start, goal, sampler, validity, rng=None, range: float = DEFAULT_RANGE,
                timeout: float = 60.0, max_iterations: int | None = None) -> PlannerResult:
    """Bidirectional RRT-Connect.

    ``sampler`` needs ``sample(rng)``; ``validity`` needs ``is_valid(q)`` and
    ``edge_valid(a, b)``. Raises ValueError if start or goal is invalid.
    """
    t0 = time.perf_counter()
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    rng = np.random.default_rng(rng)
    if not validity.is_valid(start):
        raise ValueError("start configuration is invalid")
    if not validity.is_valid(goal):
        raise ValueError("goal configuration is invalid")
    if np.array_equal(start, goal):
        return PlannerResult("solved", start[None].copy(), time.perf_counter() - t0, 0, 0)

    ta, tb = _Tree(start), _Tree(goal)
    a_is_start = True
    iterations = samples = 0
    while True:
        if time.perf_counter() - t0 > timeout or (max_iterations is not None and iterations >= max_iterations):
            return PlannerResult("timeout", None, time.perf_counter() - t0, iterations, samples)
        iterations += 1
        q = sampler.sample(rng)
        samples += 1
        status, ia = _extend(ta, q, validity, range)
        if status != _TRAPPED:
            q_new = ta.nodes[ia]
            while True:
                status_b, ib = _extend(tb, q_new, validity, range)
                if status_b != _ADVANCED:
                    break
            if status_b == _REACHED:
                first = ta.branch(ia)[::-1]
                second = tb.branch(ib)[1:]
                path = np.array(first + second)
                if not a_is_start:
                    path = path[::-1].copy()
                return PlannerResult("solved", path, time.perf_counter() - t0, iterations, samples)
        ta, tb = tb, ta
        a_is_start = not a_is_start


def path_length(path) -> float:
    path = np.asarray(path, dtype=float)
    if len(path) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(path, axis=0), axis=1)))


def densify(path, spacing: float) -> np.ndarray:
    """Waypoints plus evenly spaced interior points so no gap exceeds ``spacing``."""
    path = np.asarray(path, dtype=float)
    out = [path[0]]
    for a, b in zip(path[:-1], path[1:]):
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / spacing)))
        for k in range(1, n + 1):
            out.append(a + (b - a) * (k / n))
    return np.array(out)


def shortcut(path, validity, iterations: int = SHORTCUT_ITERATIONS, rng=None) -> np.ndarray:
    """Random shortcutting between points anywhere on the path, then greedy vertex removal.

    Endpoints are kept and the joint-space length never increases.
    """
    path = [np.asarray(p, dtype=float) for p in path]
    rng = np.random.default_rng(0 if rng is None else rng)
    for _ in range(iterations):
        if len(path) < 3:
            break
        seg = np.array([np.linalg.norm(b - a) for a, b in zip(path[:-1], path[1:])])
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        total = cum[-1]
        if total <= 0.0:
            break
        s1, s2 = np.sort(rng.uniform(0.0, total, 2))
        i = min(int(np.searchsorted(cum, s1, side="right")) - 1, len(seg) - 1)
        j = min(int(np.searchsorted(cum, s2, side="right")) - 1, len(seg) - 1)
        if i == j:
            continue
        p1 = path[i] + (path[i + 1] - path[i]) * ((s1 - cum[i]) / seg[i] if seg[i] > 0 else 0.0)
        p2 = path[j] + (path[j + 1] - path[j]) * ((s2 - cum[j]) / seg[j] if seg[j] > 0 else 0.0)
        if not validity.edge_valid(p1, p2):
            continue
        # the kept partial segments are re-discretized, so re-check them
        if not (validity.edge_valid(path[i], p1) and validity.edge_valid(p2, path[j + 1])):
            continue
        middle = [p1, p2]
        if np.array_equal(p1, path[i]):
            middle = middle[1:]
        if np.array_equal(p2, path[j + 1]):
            middle = middle[:-1]
        path = path[: i + 1] + middle + path[j + 1:]
    return np.array(_reduce_vertices(path, validity))


def _reduce_vertices(path: list[np.ndarray], validity) -> list[np.ndarray]:
    """From each kept vertex, jump to the farthest later vertex reachable in one valid edge."""
    out = [path[0]]
    i = 0
    while i < len(path) - 1:
        j = len(path) - 1
        while j > i + 1 and not validity.edge_valid(path[i], path[j]):
            j -= 1
        out.append(path[j])
        i = j
    return out
