"""Geometric near-neighbor access tree for range queries in a metric-like space.

``slack`` is the constant ``c`` of a relaxed triangle inequality
``d(x, z) <= c * (d(x, y) + d(y, z))``; pruning stays exact for any distance
obeying it. ``c = 1`` is the ordinary metric case.
"""

from __future__ import annotations

from typing import Callable, Generic, TypeVar

import numpy as np

T = TypeVar("T")

DEFAULT_DEGREE = 8
REBUILD_FRACTION = 0.1


class _Node:
    __slots__ = ("pivots", "lo", "hi", "children", "bucket")

    def __init__(self):
        self.pivots = []
        self.lo = None
        self.hi = None
        self.children = []
        self.bucket = None


class GNAT(Generic[T]):
    def __init__(self, distance: Callable[[T, T], float], degree: int = DEFAULT_DEGREE,
                 slack: float = 1.0, leaf_size: int | None = None, seed: int = 0):
        if degree < 2:
            raise ValueError("degree must be at least 2")
        if slack < 1.0:
            raise ValueError("slack must be >= 1")
        self.distance = distance
        self.degree = degree
        self.slack = slack
        self.leaf_size = leaf_size if leaf_size is not None else 2 * degree
        self.seed = seed
        self._root: _Node | None = None
        self._indexed = 0
        self._buffer: list[T] = []
        self.distance_calls = 0

    def __len__(self) -> int:
        return self._indexed + len(self._buffer)

    def items(self) -> list[T]:
        out: list[T] = []

        def collect(node):
            if node is None:
                return
            if node.bucket is not None:
                out.extend(node.bucket)
                return
            out.extend(node.pivots)
            for child in node.children:
                collect(child)

        collect(self._root)
        return out + list(self._buffer)

    def build(self, items) -> None:
        items = list(items)
        rng = np.random.default_rng(self.seed)
        self._root = self._build(items, rng) if items else None
        self._indexed = len(items)
        self._buffer = []

    def add(self, item: T) -> None:
        """Buffer ``item``; rebuild once the buffer outgrows a tenth of the indexed set."""
        self._buffer.append(item)
        if len(self._buffer) > REBUILD_FRACTION * self._indexed:
            self.build(self.items())

    def _build(self, items: list[T], rng) -> _Node:
        node = _Node()
        if len(items) <= self.leaf_size:
            node.bucket = items
            return node
        d = self.distance
        k = self.degree
        m = min(len(items), 3 * k)
        cand = [int(i) for i in rng.choice(len(items), size=m, replace=False)]
        chosen = [cand[0]]
        # greedy max-min spread among the candidates
        mind = np.array([d(items[chosen[0]], items[c]) for c in cand])
        while len(chosen) < k:
            nxt = int(np.argmax(mind))
            chosen.append(cand[nxt])
            mind = np.minimum(mind, [d(items[cand[nxt]], items[c]) for c in cand])
        chosen_set = set(chosen)
        pivots = [items[i] for i in chosen]
        rest = [it for i, it in enumerate(items) if i not in chosen_set]
        D = np.array([[d(p, x) for p in pivots] for x in rest]).reshape(len(rest), k)
        owner = np.argmin(D, axis=1) if len(rest) else np.zeros(0, dtype=int)
        P = np.array([[d(p, q) for q in pivots] for p in pivots])
        lo = P.copy()
        hi = P.copy()
        groups = []
        for j in range(k):
            members = np.nonzero(owner == j)[0]
            if len(members):
                lo[:, j] = np.minimum(lo[:, j], D[members].min(axis=0))
                hi[:, j] = np.maximum(hi[:, j], D[members].max(axis=0))
            groups.append([rest[i] for i in members])
        node.pivots = pivots
        node.lo = lo.tolist()
        node.hi = hi.tolist()
        node.children = [self._build(g, rng) if g else None for g in groups]
        return node

    def range_query(self, query: T, radius: float) -> list[T]:
        """All items within ``radius`` of ``query`` (inclusive)."""
        out: list[T] = []
        if self._root is not None:
            self._search(self._root, query, radius, out)
        for item in self._buffer:
            self.distance_calls += 1
            if self.distance(query, item) <= radius:
                out.append(item)
        return out

    def _search(self, node: _Node, q: T, r: float, out: list[T]) -> None:
        d = self.distance
        if node.bucket is not None:
            self.distance_calls += len(node.bucket)
            out.extend(x for x in node.bucket if d(q, x) <= r)
            return
        c = self.slack
        pivots = node.pivots
        k = len(pivots)
        # region j is pivot j plus its subtree; pruning drops both
        live = [True] * k
        for i in range(k):
            if not live[i]:
                continue
            self.distance_calls += 1
            di = d(q, pivots[i])
            if di <= r:
                out.append(pivots[i])
            lo_bound = di / c - r
            hi_bound = c * (di + r)
            lo_i, hi_i = node.lo[i], node.hi[i]
            # a region whose pivot was already tested only loses its subtree
            for j in range(k):
                if live[j] and (hi_i[j] < lo_bound or lo_i[j] > hi_bound):
                    live[j] = False
        for j in range(k):
            if live[j] and node.children[j] is not None:
                self._search(node.children[j], q, r, out)


def linear_range_query(items, query, radius: float, distance) -> list:
    return [x for x in items if distance(query, x) <= radius]
