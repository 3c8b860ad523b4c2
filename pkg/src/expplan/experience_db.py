"""Experience database: primitive -> critical configurations -> local sampler.

SPARK entries are indexed by a GNAT under the box-pair distance; FLAME entries
live in a hash table keyed on (grid index, occupancy word), since their metric
only ever takes the values 0 and infinity.

File format (JSON, ``version`` mandatory)::

    {"format": "expplan-experience-db", "version": 1,
     "framework": "spark" | "flame", "dof": int, "sigma": float,
     "spark": {"w_T", "w_s", "d_pairs", "d_clust", "d_radius"},
     "lattice": {"origin": [x, y, z], "resolution": r} | null,
     "trained_problems": int, "next_id": int,
     "entries": [{"id": int, "primitive": {...}, "configs": [[...], ...]}]}

SPARK primitives serialize as ``{"a": box, "b": box}`` with
``box = {"translation", "orientation" (w, x, y, z), "size"}``; FLAME
primitives as ``{"index": [i, j, k], "occupancy": "0x..."}``.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .flame import FlamePrimitive
from .geometry import BoxObstacle, Pose
from .gnat import DEFAULT_DEGREE, GNAT
from .sampling import DEFAULT_SIGMA, LocalSampler, build_local_sampler
from .spark import SparkConfig, SparkPrimitive, spark_primitive_bound, spark_primitive_distance

FORMAT_TAG = "expplan-experience-db"
FORMAT_VERSION = 1
DEDUP_TOLERANCE = 1e-6
# the index runs on spark_primitive_bound, a true metric, so slack 1 prunes exactly
DEFAULT_GNAT_SLACK = 1.0


class DatabaseFormatError(ValueError):
    pass


@dataclass(eq=False)
class DatabaseEntry:
    entry_id: int
    primitive: SparkPrimitive | FlamePrimitive
    configs: np.ndarray
    sampler: LocalSampler

    @property
    def key(self):
        return self.primitive.key


def _dedup_union(existing: np.ndarray | None, new: np.ndarray) -> np.ndarray:
    kept = [] if existing is None else list(existing)
    for q in new:
        if kept and np.min(np.max(np.abs(np.asarray(kept) - q), axis=1)) < DEDUP_TOLERANCE:
            continue
        kept.append(q)
    return np.array(kept, dtype=float)


class ExperienceDatabase:
    def __init__(self, framework: str, dof: int, spark: SparkConfig = SparkConfig(),
                 sigma: float = DEFAULT_SIGMA, lattice: dict | None = None,
                 gnat_degree: int = DEFAULT_DEGREE, gnat_slack: float = DEFAULT_GNAT_SLACK):
        if framework not in ("spark", "flame"):
            raise ValueError(f"unknown framework {framework!r}")
        self.framework = framework
        self.dof = int(dof)
        self.spark = spark
        self.sigma = float(sigma)
        self.lattice = lattice
        self.trained_problems = 0
        self.entries: list[DatabaseEntry] = []
        self._by_key: dict = {}
        self._next_id = 0
        self._index: GNAT | None = None
        if framework == "spark":
            self._index = GNAT(self._entry_distance, degree=gnat_degree, slack=gnat_slack)

    def __len__(self) -> int:
        return len(self.entries)

    def _entry_distance(self, a: DatabaseEntry, b: DatabaseEntry) -> float:
        return spark_primitive_bound(a.primitive, b.primitive, self.spark)

    def get(self, primitive) -> DatabaseEntry | None:
        return self._by_key.get(primitive.key)

    def _check_primitive(self, primitive) -> None:
        if self.framework == "spark" and not isinstance(primitive, SparkPrimitive):
            raise TypeError("spark database only stores SparkPrimitive")
        if self.framework == "flame":
            if not isinstance(primitive, FlamePrimitive):
                raise TypeError("flame database only stores FlamePrimitive")
            lattice = {"origin": list(primitive.origin), "resolution": primitive.resolution}
            if self.lattice is None:
                self.lattice = lattice
            elif self.lattice != lattice:
                raise ValueError(f"octobox lattice {lattice} does not match database lattice {self.lattice}")

    def insert(self, primitive, new_critical) -> DatabaseEntry:
        """Add critical configurations for ``primitive``, merging with an existing entry."""
        new_critical = np.atleast_2d(np.asarray(new_critical, dtype=float))
        if len(new_critical) == 0 or new_critical.size == 0:
            raise ValueError("need at least one critical configuration")
        if new_critical.shape[1] != self.dof:
            raise ValueError(f"configurations have {new_critical.shape[1]} joints, database has {self.dof}")
        self._check_primitive(primitive)
        entry = self._by_key.get(primitive.key)
        if entry is not None:
            merged = _dedup_union(entry.configs, new_critical)
            if len(merged) != len(entry.configs):
                entry.configs = merged
                entry.sampler = build_local_sampler(merged, self.sigma, entry.entry_id)
            return entry
        configs = _dedup_union(None, new_critical)
        entry = DatabaseEntry(self._next_id, primitive, configs, build_local_sampler(configs, self.sigma, self._next_id))
        self._next_id += 1
        self.entries.append(entry)
        self._by_key[primitive.key] = entry
        if self._index is not None:
            self._index.add(entry)
        return entry

    def reindex(self) -> None:
        """Rebuild the metric index over all entries (flushes buffered inserts)."""
        if self._index is not None:
            self._index.build(self.entries)

    def _probe(self, primitive) -> DatabaseEntry:
        return DatabaseEntry(-1, primitive, np.zeros((0, self.dof)), None)

    def range_query(self, primitive: SparkPrimitive, radius: float) -> list[DatabaseEntry]:
        """GNAT range query over SPARK entries.

        The index prunes with a metric lower bound on the pair distance; its
        candidates are then filtered with the full distance.
        """
        if self._index is None:
            raise ValueError("range queries need a spark database")
        found = self._index.range_query(self._probe(primitive), radius)
        return [e for e in found if spark_primitive_distance(primitive, e.primitive, self.spark) <= radius]

    def linear_range_query(self, primitive: SparkPrimitive, radius: float) -> list[DatabaseEntry]:
        return [e for e in self.entries
                if spark_primitive_distance(primitive, e.primitive, self.spark) <= radius]

    def retrieve_spark(self, queries, radius: float | None = None, linear: bool = False) -> list[LocalSampler]:
        """Samplers of every entry within ``radius`` of any query, deduplicated, in entry order."""
        if self.framework != "spark":
            raise ValueError("retrieve_spark needs a spark database")
        radius = self.spark.d_radius if radius is None else radius
        found: dict[int, DatabaseEntry] = {}
        query = self.linear_range_query if linear else self.range_query
        for prim in queries:
            for e in query(prim, radius):
                found[e.entry_id] = e
        return [found[i].sampler for i in sorted(found)]

    def retrieve_flame(self, queries) -> list[LocalSampler]:
        if self.framework != "flame":
            raise ValueError("retrieve_flame needs a flame database")
        found: dict[int, DatabaseEntry] = {}
        for prim in queries:
            e = self._by_key.get(prim.key)
            if e is not None:
                found[e.entry_id] = e
        return [found[i].sampler for i in sorted(found)]

    def retrieve(self, queries) -> list[LocalSampler]:
        return self.retrieve_spark(queries) if self.framework == "spark" else self.retrieve_flame(queries)

    def snapshot(self) -> dict:
        """Entry keys mapped to their critical configuration sets (as sorted tuples)."""
        return {e.key: tuple(sorted(map(tuple, e.configs.tolist()))) for e in self.entries}

    # persistence

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_TAG,
            "version": FORMAT_VERSION,
            "framework": self.framework,
            "dof": self.dof,
            "sigma": self.sigma,
            "spark": asdict(self.spark),
            "lattice": self.lattice,
            "trained_problems": self.trained_problems,
            "next_id": self._next_id,
            "entries": [
                {"id": e.entry_id, "primitive": _primitive_to_json(e.primitive), "configs": e.configs.tolist()}
                for e in self.entries
            ],
        }

    def save(self, destination) -> None:
        destination = Path(destination)
        fd, tmp = tempfile.mkstemp(dir=destination.parent or ".", prefix=destination.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "w") as f:
                json.dump(self.to_dict(), f)
            os.replace(tmp, destination)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @classmethod
    def from_dict(cls, d: dict) -> ExperienceDatabase:
        if not isinstance(d, dict) or d.get("format") != FORMAT_TAG:
            raise DatabaseFormatError("not an experience database file")
        if d.get("version") != FORMAT_VERSION:
            raise DatabaseFormatError(f"unsupported database version {d.get('version')!r} (expected {FORMAT_VERSION})")
        try:
            db = cls(d["framework"], d["dof"], SparkConfig(**d["spark"]), d["sigma"], d.get("lattice"))
            db.trained_problems = int(d.get("trained_problems", 0))
            entries = []
            for raw in d["entries"]:
                prim = _primitive_from_json(raw["primitive"], db.framework, db.lattice)
                configs = np.array(raw["configs"], dtype=float).reshape(-1, db.dof)
                if len(configs) == 0:
                    raise DatabaseFormatError(f"entry {raw['id']} has no configurations")
                eid = int(raw["id"])
                entries.append(DatabaseEntry(eid, prim, configs, build_local_sampler(configs, db.sigma, eid)))
        except DatabaseFormatError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise DatabaseFormatError(f"malformed database: {exc}") from exc
        for e in entries:
            if e.key in db._by_key:
                raise DatabaseFormatError(f"duplicate primitive for entry {e.entry_id}")
            db._by_key[e.key] = e
        db.entries = entries
        db._next_id = int(d.get("next_id", max((e.entry_id for e in entries), default=-1) + 1))
        if db._index is not None:
            db._index.build(entries)
        return db

    @classmethod
    def load(cls, source) -> ExperienceDatabase:
        try:
            text = Path(source).read_text()
            d = json.loads(text)
        except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DatabaseFormatError(f"cannot read database {source}: {exc}") from exc
        return cls.from_dict(d)


def _box_to_json(box: BoxObstacle) -> dict:
    return {
        "translation": box.pose.translation.tolist(),
        "orientation": box.pose.orientation.tolist(),
        "size": box.size.tolist(),
    }


def _box_from_json(d: dict) -> BoxObstacle:
    return BoxObstacle(Pose(d["translation"], d["orientation"]), d["size"])


def _primitive_to_json(p) -> dict:
    if isinstance(p, SparkPrimitive):
        return {"a": _box_to_json(p.box_a), "b": _box_to_json(p.box_b)}
    return {"index": list(p.grid_index), "occupancy": hex(p.occupancy)}


def _primitive_from_json(d: dict, framework: str, lattice: dict | None):
    if framework == "spark":
        return SparkPrimitive(_box_from_json(d["a"]), _box_from_json(d["b"]))
    if lattice is None:
        raise DatabaseFormatError("flame database without lattice")
    return FlamePrimitive(tuple(int(i) for i in d["index"]), int(d["occupancy"], 16),
                          tuple(float(x) for x in lattice["origin"]), float(lattice["resolution"]))


def db_insert(db: ExperienceDatabase, primitive, new_critical) -> ExperienceDatabase:
    db.insert(primitive, new_critical)
    return db


def db_save(db: ExperienceDatabase, destination) -> None:
    db.save(destination)


def db_load(source) -> ExperienceDatabase:
    return ExperienceDatabase.load(source)
