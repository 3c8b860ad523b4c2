"""Benchmark protocols: online training, paired evaluation, transfer, k-fold and retrieval scaling.

Seeding: every random draw comes from one master seed. Trial ``i`` of stream
``tag`` uses ``SeedSequence(master, spawn_key=(STREAMS[tag], i))``, so any
single trial can be re-run in isolation and all frameworks in one bench call
see identical scenes, tasks and planner seeds.

CSV schema (one row per trial):

    tag, trial, scene_seed, planner_seed, framework, train_size, family,
    variation, task, retrieval_time, planning_time, total_time, outcome,
    path_length, iterations, retrieved

Summary CSV (one row per (tag, framework, train_size) group):

    tag, framework, train_size, trials, solved, success_rate, mean_total,
    median_total, std_total, mean_retrieval
"""

from __future__ import annotations

import csv
import math
import statistics
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .experience_db import ExperienceDatabase
from .pipeline import make_strategy, plan_with_experience, solve_and_learn
from .planner import path_length
from .robot import KinematicChain, load_chain
from .scenes import SceneGenerationError, generate_scene, parse_variation
from .spark import random_spark_primitive

STREAMS = {"train": 0, "test": 1, "train-planner": 2, "test-planner": 3, "scaling": 4}
DEFAULT_TIMEOUT = 60.0
DEFAULT_TRAIN_COUNT = 100
DEFAULT_TEST_COUNT = 30


def trial_seed(master: int, stream: str, i: int) -> int:
    """Deterministic 63-bit seed for trial ``i`` of ``stream``."""
    ss = np.random.SeedSequence(int(master), spawn_key=(STREAMS[stream], int(i)))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _variation_tag(variation) -> str:
    return ",".join(parse_variation(variation)) or "none"


@dataclass
class TrialRow:
    tag: str
    trial: int
    scene_seed: int
    planner_seed: int
    framework: str
    train_size: int
    family: str
    variation: str
    task: str
    retrieval_time: float
    planning_time: float
    total_time: float
    outcome: str
    path_length: float
    iterations: int
    retrieved: int


@dataclass
class SummaryRow:
    tag: str
    framework: str
    train_size: int
    trials: int
    solved: int
    success_rate: float
    mean_total: float
    median_total: float
    std_total: float
    mean_retrieval: float


@dataclass
class TrainRecord:
    problem: int
    scene_seed: int
    outcome: str
    solve_time: float
    db_size: int


def summarize(rows: list[TrialRow]) -> list[SummaryRow]:
    """Aggregate rows per (tag, framework, train_size), in first-seen order."""
    groups: dict[tuple, list[TrialRow]] = {}
    for r in rows:
        groups.setdefault((r.tag, r.framework, r.train_size), []).append(r)
    out = []
    for (tag, fw, size), rs in groups.items():
        totals = [r.total_time for r in rs]
        solved = sum(r.outcome == "solved" for r in rs)
        out.append(SummaryRow(
            tag, fw, size, len(rs), solved, solved / len(rs), statistics.fmean(totals),
            statistics.median(totals), statistics.stdev(totals) if len(rs) > 1 else 0.0,
            statistics.fmean(r.retrieval_time for r in rs),
        ))
    return out


def _write(path, records, cls) -> None:
    names = [f.name for f in fields(cls)]
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=names)
        w.writeheader()
        for r in records:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in asdict(r).items()})


def _read(path, cls) -> list:
    types = {f.name: f.type for f in fields(cls)}
    conv = {"int": int, "float": float, "str": str}
    with open(path, newline="") as f:
        return [cls(**{k: conv[types[k]](v) for k, v in row.items()}) for row in csv.DictReader(f)]


def summary_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".summary" + path.suffix)


def write_report(path, rows: list[TrialRow]) -> None:
    """Trial rows to ``path`` and their aggregates to ``<stem>.summary<suffix>``."""
    _write(path, rows, TrialRow)
    _write(summary_path(path), summarize(rows), SummaryRow)


def read_rows(path) -> list[TrialRow]:
    return _read(path, TrialRow)


def read_summary(path) -> list[SummaryRow]:
    return _read(path, SummaryRow)


def write_train_log(path, records: list[TrainRecord]) -> None:
    _write(path, records, TrainRecord)


def _chain(chain) -> KinematicChain:
    return chain if isinstance(chain, KinematicChain) else load_chain(chain or "arm8")


def train(db: ExperienceDatabase, family: str, variation=(), count: int = DEFAULT_TRAIN_COUNT,
          seed: int = 0, task: str = "pick", timeout: float = DEFAULT_TIMEOUT, chain="arm8",
          strategy=None, problems=None, log=None) -> list[TrainRecord]:
    """Online-incremental training: plan each problem with the current db, then learn from it.

    Problems are numbered from ``db.trained_problems`` so that two chained runs
    see the same seed stream as one longer run. ``problems`` overrides the
    problem indices (k-fold). Unsolved or ungeneratable problems are logged
    and skipped.
    """
    chain = _chain(chain)
    strategy = strategy or make_strategy(db.framework)
    if db.dof != chain.dof:
        raise ValueError(f"database has {db.dof} joints, chain {chain.dof}")
    if problems is None:
        problems = range(db.trained_problems, db.trained_problems + count)
    records = []
    for i in problems:
        scene_seed = trial_seed(seed, "train", i)
        try:
            scene, t = generate_scene(family, variation, scene_seed, task, chain)
        except SceneGenerationError:
            rec = TrainRecord(i, scene_seed, "no-scene", 0.0, len(db))
        else:
            out = solve_and_learn(db, scene, t, chain, strategy, rng=trial_seed(seed, "train-planner", i),
                                  timeout=timeout)
            rec = TrainRecord(i, scene_seed, out.outcome, out.total_time, len(db))
        db.trained_problems += 1
        records.append(rec)
        if log is not None:
            log(rec)
    return records


def paired_problems(family: str, variation=(), trials: int = DEFAULT_TEST_COUNT, seed: int = 0,
                  task: str = "pick", chain="arm8", indices=None) -> list[tuple]:
    """``(index, scene, task)`` for the paired test set; ungeneratable seeds are skipped."""
    chain = _chain(chain)
    out = []
    for i in (range(trials) if indices is None else indices):
        try:
            scene, t = generate_scene(family, variation, trial_seed(seed, "test", i), task, chain)
        except SceneGenerationError:
            continue
        out.append((i, scene, t))
    return out


def evaluate(frameworks: dict, problems: list[tuple], seed: int = 0, timeout: float = DEFAULT_TIMEOUT,
             chain="arm8", tag: str = "bench", lam: float | None = None, log=None) -> list[TrialRow]:
    """Paired evaluation: every framework plans every problem with the same planner seed.

    ``frameworks`` maps a label to ``None`` (uniform) or an ``ExperienceDatabase``.
    """
    chain = _chain(chain)
    kw = {} if lam is None else {"lam": lam}
    rows = []
    for i, scene, task in problems:
        pseed = trial_seed(seed, "test-planner", i)
        for label, db in frameworks.items():
            strategy = None if db is None else make_strategy(db.framework)
            out = plan_with_experience(db, scene, task, chain, strategy, rng=pseed, timeout=timeout, **kw)
            r = out.result
            row = TrialRow(
                tag, i, scene.seed, pseed, label, 0 if db is None else db.trained_problems,
                scene.family, _variation_tag(scene.variation), task.kind, out.retrieval_time,
                out.planning_time, out.total_time, out.outcome,
                path_length(r.path) if r.solved else math.nan, r.iterations, out.sampler.K,
            )
            rows.append(row)
            if log is not None:
                log(row)
    return rows


def bench(frameworks: dict, family: str, variation=(), trials: int = DEFAULT_TEST_COUNT, seed: int = 0,
          task: str = "pick", timeout: float = DEFAULT_TIMEOUT, chain="arm8", tag: str = "bench",
          lam: float | None = None, log=None) -> list[TrialRow]:
    chain = _chain(chain)
    for label, db in frameworks.items():
        if db is not None and db.framework != label.split("@")[0]:
            raise ValueError(f"framework {label!r} was given a {db.framework} database")
    problems = paired_problems(family, variation, trials, seed, task, chain)
    return evaluate(frameworks, problems, seed, timeout, chain, tag, lam, log)


def transfer(frameworks: dict, family: str = "large_shelf", variation=(), trials: int = DEFAULT_TEST_COUNT,
             seed: int = 0, task: str = "place", timeout: float = DEFAULT_TIMEOUT, chain="arm8",
             lam: float | None = None, log=None) -> list[TrialRow]:
    """Evaluate databases on a task kind they were not trained on; rows are tagged ``TX``."""
    return bench(frameworks, family, variation, trials, seed, task, timeout, chain, "TX", lam, log)


def kfold(framework: str, family: str, variation=(), count: int = DEFAULT_TRAIN_COUNT, folds: int = 5,
          seed: int = 0, task: str = "pick", timeout: float = DEFAULT_TIMEOUT, chain="arm8",
          include_uniform: bool = True, log=None) -> list[TrialRow]:
    """Split ``count`` training-stream problems into folds; train on k-1, test on the held-out one."""
    if folds < 2 or folds > count:
        raise ValueError(f"need 2 <= folds <= count, got folds={folds}, count={count}")
    chain = _chain(chain)
    strategy = make_strategy(framework)
    parts = np.array_split(np.arange(count), folds)
    rows = []
    for k, held in enumerate(parts):
        db = strategy.new_database(chain.dof)
        train(db, family, variation, seed=seed, task=task, timeout=timeout, chain=chain, strategy=strategy,
              problems=[int(i) for i in np.concatenate([p for j, p in enumerate(parts) if j != k])])
        problems = []
        for i in held:
            i = int(i)
            try:
                scene, t = generate_scene(family, variation, trial_seed(seed, "train", i), task, chain)
            except SceneGenerationError:
                continue
            problems.append((i, scene, t))
        entries = {framework: db}
        if include_uniform:
            entries = {"uniform": None, **entries}
        rows += evaluate(entries, problems, seed, timeout, chain, f"fold{k}", log=log)
    return rows


@dataclass
class ScalingRow:
    framework: str
    size: int
    queries: int
    index_time: float
    linear_time: float
    ratio: float
    mean_hits: float
    equal: bool


def retrieval_scaling(sizes, queries: int = 100, framework: str = "spark", seed: int = 0,
                      radius: float | None = None) -> list[ScalingRow]:
    """Mean per-query retrieval time for the index and a linear scan at each database size.

    Databases hold random primitives, each with one configuration. Every
    query's index result is compared with the linear scan.
    """
    rows = []
    for size in sizes:
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(STREAMS["scaling"], int(size))))
        if framework == "spark":
            db = ExperienceDatabase("spark", 1)
            radius_ = db.spark.d_radius if radius is None else radius
            for _ in range(size):
                db.insert(random_spark_primitive(rng), [[0.0]])
            qs = [random_spark_primitive(rng) for _ in range(queries)]
            fast = lambda q: {e.entry_id for e in db.range_query(q, radius_)}
            slow = lambda q: {e.entry_id for e in db.linear_range_query(q, radius_)}
        elif framework == "flame":
            from .flame import FlamePrimitive
            db = ExperienceDatabase("flame", 1)

            def draw():
                return FlamePrimitive(tuple(int(v) for v in rng.integers(0, 16, 3)),
                                      int(rng.integers(1, 1 << 8)), (0.0, 0.0, 0.0), 0.05)
            for _ in range(size):
                db.insert(draw(), [[0.0]])
            qs = [draw() for _ in range(queries)]
            fast = lambda q: {e.entry_id for e in ([db.get(q)] if db.get(q) is not None else [])}
            slow = lambda q: {e.entry_id for e in db.entries if e.key == q.key}
        else:
            raise ValueError(f"unknown framework {framework!r}")
        db.reindex()
        t0 = time.perf_counter()
        got = [fast(q) for q in qs]
        t1 = time.perf_counter()
        want = [slow(q) for q in qs]
        t2 = time.perf_counter()
        n = max(len(qs), 1)
        index_t, linear_t = (t1 - t0) / n, (t2 - t1) / n
        rows.append(ScalingRow(framework, size, len(qs), index_t, linear_t,
                               index_t / linear_t if linear_t > 0 else math.nan,
                               statistics.fmean(len(g) for g in got) if got else 0.0, got == want))
    return rows


def write_scaling(path, rows: list[ScalingRow]) -> None:
    _write(path, rows, ScalingRow)
