"""Learning and inference over a pluggable workspace decomposition (SPARK or FLAME)."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .experience_db import ExperienceDatabase
from .flame import (
    DEFAULT_CENTER,
    DEFAULT_DEPTH,
    DEFAULT_RESOLUTION,
    build_octree,
    flame_critical_matrix,
    flame_decompose,
    flame_is_critical,
)
from .planner import DEFAULT_RANGE, PlannerResult, densify, rrt_connect, shortcut
from .robot import CollisionChecker, KinematicChain
from .sampling import DEFAULT_LAMBDA, GlobalSampler, make_global_sampler
from .spark import SparkConfig, spark_critical_matrix, spark_decompose, spark_is_critical

LEARN_SPACING = 0.25


def _obstacles(scene):
    return list(getattr(scene, "obstacles", scene))


@dataclass(frozen=True)
class SparkStrategy:
    cfg: SparkConfig = SparkConfig()
    name: str = field(default="spark", init=False)
    retrieval: str = field(default="radius", init=False)

    def decompose(self, scene):
        return spark_decompose(_obstacles(scene), self.cfg)

    def is_critical(self, chain, q, prim) -> bool:
        return spark_is_critical(chain, q, prim, self.cfg)

    def critical_matrix(self, chain, configs, prims) -> np.ndarray:
        return spark_critical_matrix(chain, configs, prims, self.cfg)

    def retrieve(self, db: ExperienceDatabase, prims):
        return db.retrieve_spark(prims, self.cfg.d_radius)

    def new_database(self, dof: int, sigma: float | None = None) -> ExperienceDatabase:
        kw = {} if sigma is None else {"sigma": sigma}
        return ExperienceDatabase("spark", dof, self.cfg, **kw)


@dataclass(frozen=True)
class FlameStrategy:
    resolution: float = DEFAULT_RESOLUTION
    depth: int = DEFAULT_DEPTH
    center: tuple[float, float, float] = DEFAULT_CENTER
    dropout: float = 0.0  # fraction of occupied leaves hidden from the octree, for partial-view tests
    seed: int = 0
    name: str = field(default="flame", init=False)
    retrieval: str = field(default="exact", init=False)

    def octree(self, scene):
        rng = np.random.default_rng(self.seed) if self.dropout > 0 else None
        return build_octree(_obstacles(scene), resolution=self.resolution, depth=self.depth,
                            center=self.center, dropout=self.dropout, rng=rng)

    def decompose(self, scene):
        return flame_decompose(self.octree(scene))

    def is_critical(self, chain, q, prim) -> bool:
        return flame_is_critical(chain, q, prim)

    def critical_matrix(self, chain, configs, prims) -> np.ndarray:
        return flame_critical_matrix(chain, configs, prims)

    def retrieve(self, db: ExperienceDatabase, prims):
        return db.retrieve_flame(prims)

    def new_database(self, dof: int, sigma: float | None = None) -> ExperienceDatabase:
        kw = {} if sigma is None else {"sigma": sigma}
        return ExperienceDatabase("flame", dof, **kw)


STRATEGIES = {"spark": SparkStrategy, "flame": FlameStrategy}


def make_strategy(name: str, **kw):
    if name not in STRATEGIES:
        raise ValueError(f"unknown framework {name!r}; expected one of {sorted(STRATEGIES)}")
    return STRATEGIES[name](**kw)


def _check_framework(db: ExperienceDatabase, strategy) -> None:
    if db.framework != strategy.name:
        raise ValueError(f"database holds {db.framework} experience, strategy is {strategy.name}")


def learn(db: ExperienceDatabase, scene, path, chain: KinematicChain, strategy,
          spacing: float = LEARN_SPACING) -> ExperienceDatabase:
    """Store the path configurations critical to each primitive of ``scene``.

    The path is densified to ``spacing`` before testing. Primitives with no
    critical configuration are skipped.
    """
    _check_framework(db, strategy)
    path = np.atleast_2d(np.asarray(path, dtype=float))
    if path.shape[1] != chain.dof or db.dof != chain.dof:
        raise ValueError(f"path has {path.shape[1]} joints, chain {chain.dof}, database {db.dof}")
    prims = strategy.decompose(scene)
    if not prims:
        return db
    configs = densify(path, spacing) if len(path) > 1 else path
    crit = strategy.critical_matrix(chain, configs, prims)
    for j in np.nonzero(crit.any(axis=0))[0]:
        db.insert(prims[j], configs[crit[:, j]])
    return db


def infer(db: ExperienceDatabase | None, scene, chain: KinematicChain, strategy,
          lam: float = DEFAULT_LAMBDA) -> GlobalSampler:
    """Composite sampler from every entry matching a primitive of ``scene``."""
    if db is None or strategy is None:
        return make_global_sampler((), 1.0, chain.lower, chain.upper)
    _check_framework(db, strategy)
    if len(db) == 0:
        return make_global_sampler((), lam, chain.lower, chain.upper)
    samplers = strategy.retrieve(db, strategy.decompose(scene))
    return make_global_sampler(samplers, lam, chain.lower, chain.upper)


@dataclass
class ExperienceResult:
    result: PlannerResult
    retrieval_time: float
    sampler: GlobalSampler

    @property
    def planning_time(self) -> float:
        return self.result.time

    @property
    def total_time(self) -> float:
        return self.retrieval_time + self.result.time

    @property
    def outcome(self) -> str:
        return self.result.outcome

    @property
    def solved(self) -> bool:
        return self.result.solved


def plan_with_experience(db, scene, task, chain: KinematicChain, strategy, lam: float = DEFAULT_LAMBDA,
                         rng=None, range: float = DEFAULT_RANGE, timeout: float = 60.0,
                         max_iterations: int | None = None) -> ExperienceResult:
    """Retrieve (timed), then run RRT-Connect from ``task.start`` to ``task.goal``.

    ``db=None`` or ``strategy=None`` plans with the uniform sampler and zero
    retrieval time. If ``task`` carries an object, it is attached to ``chain``.
    """
    chain = task.chain_for(chain) if hasattr(task, "chain_for") else chain
    t0 = time.perf_counter()
    sampler = infer(db, scene, chain, strategy, lam)
    retrieval = time.perf_counter() - t0 if strategy is not None and db is not None else 0.0
    checker = CollisionChecker(chain, _obstacles(scene))
    result = rrt_connect(task.start, task.goal, sampler, checker, rng=rng, range=range,
                         timeout=timeout, max_iterations=max_iterations)
    return ExperienceResult(result, retrieval, sampler)


def solve_and_learn(db: ExperienceDatabase, scene, task, chain: KinematicChain, strategy,
                    lam: float = DEFAULT_LAMBDA, rng=None, timeout: float = 60.0,
                    shortcut_iterations: int | None = None) -> ExperienceResult:
    """One online-incremental training step: plan with the current db, shortcut, learn."""
    rng = np.random.default_rng(rng)
    out = plan_with_experience(db, scene, task, chain, strategy, lam, rng=rng, timeout=timeout)
    if out.solved:
        loaded = task.chain_for(chain)
        checker = CollisionChecker(loaded, _obstacles(scene))
        kw = {} if shortcut_iterations is None else {"iterations": shortcut_iterations}
        path = shortcut(out.result.path, checker, rng=rng, **kw)
        out.result.path = path
        learn(db, scene, path, loaded, strategy)
    return out
