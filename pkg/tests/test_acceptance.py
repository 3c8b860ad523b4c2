"""Acceptance suite: one or more tests per criterion, summarized by conftest.

The benchmark criteria (1-4, 9, 11) share module-scoped protocol fixtures,
so training happens once. Expect this module to take a few hours on a
single core.
"""

from __future__ import annotations

import statistics

import numpy as np
import pytest
from scipy import stats

from expplan import bench as B
from expplan.experience_db import ExperienceDatabase, db_load, db_save
from expplan.flame import FULL_BLOCK, build_octree, flame_decompose
from expplan.geometry import BoxObstacle, Pose, gjk_distance, pose_distance
from expplan.gnat import GNAT, linear_range_query
from expplan.pipeline import make_strategy
from expplan.robot import load_chain
from expplan.sampling import build_local_sampler, make_global_sampler
from expplan.spark import SparkConfig, SparkPrimitive, random_spark_primitive, spark_primitive_distance

from .conftest import record
from .oracles import brute_rasterize, dense_box_distance, random_quaternion
from .test_experience_db import shelf_panels

SEED = 0
TIMEOUT = 60.0
ALL_AXES = ("X", "Y", "Z", "yaw")
SIZES = (0, 25, 50, 100)
TEST_SCENES = 30
TRANSFER_TRAIN = 50
TRANSFER_TRIALS = 30
GUARD_PROBLEMS = 50


def criterion(n, title):
    return pytest.mark.criterion(n, title)


def mean_total(rows):
    return statistics.fmean(r.total_time for r in rows)


def success(rows):
    return sum(r.outcome == "solved" for r in rows) / len(rows)


# benchmark protocols


@pytest.fixture(scope="module")
def chain():
    return load_chain("arm8")


@pytest.fixture(scope="module")
def small_shelf(chain):
    """Uniform baseline plus SPARK and FLAME evaluated at each training size on paired test scenes."""
    problems = B.paired_problems("small_shelf", ALL_AXES, TEST_SCENES, SEED, "pick", chain)
    assert len(problems) == TEST_SCENES
    out = {"problems": problems,
           "uniform": B.evaluate({"uniform": None}, problems, SEED, TIMEOUT, chain, tag="accept")}
    for fw in ("spark", "flame"):
        strategy = make_strategy(fw)
        db = strategy.new_database(chain.dof)
        out[fw] = {}
        for size in SIZES:
            B.train(db, "small_shelf", ALL_AXES, size - db.trained_problems, SEED, "pick", TIMEOUT, chain,
                    strategy)
            out[fw][size] = B.evaluate({fw: db}, problems, SEED, TIMEOUT, chain, tag="accept")
        out[fw + "_db"] = db
    return out


@criterion(1, "SPARK speedup on small_shelf (<= 0.7x uniform mean, success >= uniform)")
def test_spark_speedup(small_shelf):
    u, s = small_shelf["uniform"], small_shelf["spark"][100]
    ratio = mean_total(s) / mean_total(u)
    record(1, uniform_mean=mean_total(u), spark_mean=mean_total(s), ratio=ratio,
           uniform_success=success(u), spark_success=success(s))
    assert ratio <= 0.7
    assert success(s) >= success(u)


@criterion(2, "FLAME speedup on small_shelf (<= 0.8x uniform mean)")
def test_flame_speedup(small_shelf):
    u, f = small_shelf["uniform"], small_shelf["flame"][100]
    ratio = mean_total(f) / mean_total(u)
    record(2, uniform_mean=mean_total(u), flame_mean=mean_total(f), ratio=ratio,
           flame_vs_spark=mean_total(f) / mean_total(small_shelf["spark"][100]))
    assert ratio <= 0.8


@criterion(3, "convergence: mean time non-increasing over sizes 0/25/50/100; size 0 matches uniform")
@pytest.mark.parametrize("fw", ["spark", "flame"])
def test_convergence(small_shelf, fw):
    means = [mean_total(small_shelf[fw][n]) for n in SIZES]
    record(3, **{f"{fw}_{n}": m for n, m in zip(SIZES, means)})
    for a, b in zip(means[:-1], means[1:]):
        assert b <= 1.1 * a
    # with an empty database the planner consumes the same random stream as uniform
    zero, uni = small_shelf[fw][0], small_shelf["uniform"]
    assert [(r.outcome, r.iterations) for r in zero] == [(r.outcome, r.iterations) for r in uni]
    assert all(r.retrieved == 0 for r in zero)
    assert abs(mean_total(zero) - mean_total(uni)) <= 0.1 * mean_total(uni)


@pytest.fixture(scope="module")
def transfer(chain):
    """Pick-trained databases evaluated on place tasks with the held object attached."""
    dbs = {}
    for fw in ("spark", "flame"):
        strategy = make_strategy(fw)
        db = strategy.new_database(chain.dof)
        B.train(db, "large_shelf", ("X", "Y", "yaw"), TRANSFER_TRAIN, SEED, "pick", TIMEOUT, chain, strategy)
        dbs[fw] = db
    rows = B.transfer({"uniform": None, **dbs}, "large_shelf", ("X", "Y", "yaw"), TRANSFER_TRIALS, SEED,
                      "place", TIMEOUT, chain)
    return {fw: [r for r in rows if r.framework == fw] for fw in ("uniform", "spark", "flame")}


@criterion(4, "transfer: pick-trained databases beat uniform on large_shelf place")
@pytest.mark.parametrize("fw", ["spark", "flame"])
def test_transfer(transfer, fw):
    u, x = transfer["uniform"], transfer[fw]
    assert len(u) == len(x) > 0 and all(r.tag == "TX" and r.task == "place" for r in x)
    record(4, uniform_mean=mean_total(u), **{f"{fw}_mean": mean_total(x), f"{fw}_ratio": mean_total(x) / mean_total(u)})
    assert mean_total(x) < mean_total(u)


# index, geometry and metric criteria


@criterion(5, "GNAT equals linear scan; <= 0.35x linear time at 10,000 entries")
@pytest.mark.parametrize("radius", [0.1, 0.4, 1.0])
def test_gnat_equivalence(radius):
    rng = np.random.default_rng(100)
    items = [random_spark_primitive(rng) for _ in range(1000)]
    index = GNAT(spark_primitive_distance)
    index.build(items)
    for _ in range(100):
        q = random_spark_primitive(rng)
        got = {id(x) for x in index.range_query(q, radius)}
        assert got == {id(x) for x in linear_range_query(items, q, radius, spark_primitive_distance)}


@criterion(5, "GNAT equals linear scan; <= 0.35x linear time at 10,000 entries")
def test_gnat_equivalence_clustered():
    # one shelf's panels under small shifts and wide yaw, inserted incrementally
    rng = np.random.default_rng(101)
    db = ExperienceDatabase("spark", 1)
    for _ in range(1000):
        db.insert(shelf_panels(rng), [[0.0]])
    for _ in range(100):
        q = shelf_panels(rng)
        for radius in (0.1, 0.4, 1.0):
            got = {e.entry_id for e in db.range_query(q, radius)}
            assert got == {e.entry_id for e in db.linear_range_query(q, radius)}


@criterion(5, "GNAT equals linear scan; <= 0.35x linear time at 10,000 entries")
def test_gnat_scaling():
    rows = {r.size: r for r in B.retrieval_scaling([100, 10_000], queries=100, seed=SEED)}
    record(5, ratio_100=rows[100].ratio, ratio_10000=rows[10_000].ratio)
    assert rows[100].equal and rows[10_000].equal
    assert rows[10_000].ratio <= 0.35
    assert rows[10_000].ratio < rows[100].ratio


@criterion(6, "GJK vs analytic (1e-6), dense oracle (1e-3), symmetry/translation (1e-9)")
def test_gjk_axis_aligned():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(1000):
        ca, cb = rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3)
        sa, sb = rng.uniform(0.05, 1.5, 3), rng.uniform(0.05, 1.5, 3)
        gap = float(np.linalg.norm(np.maximum(np.abs(ca - cb) - (sa + sb) / 2, 0.0)))
        d = gjk_distance(BoxObstacle.axis_aligned(ca, sa).hull(), BoxObstacle.axis_aligned(cb, sb).hull())
        worst = max(worst, abs(d - gap))
    record(6, analytic_err=worst)
    assert worst <= 1e-6


@criterion(6, "GJK vs analytic (1e-6), dense oracle (1e-3), symmetry/translation (1e-9)")
def test_gjk_rotated():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        a = BoxObstacle(Pose(rng.uniform(-1, 1, 3), random_quaternion(rng)), rng.uniform(0.1, 0.8, 3))
        b = BoxObstacle(Pose(rng.uniform(-1, 1, 3) + (1.2, 0, 0), random_quaternion(rng)), rng.uniform(0.1, 0.8, 3))
        worst = max(worst, abs(gjk_distance(a.hull(), b.hull()) - dense_box_distance(a, b)))
    record(6, dense_err=worst)
    assert worst <= 1e-3


@criterion(6, "GJK vs analytic (1e-6), dense oracle (1e-3), symmetry/translation (1e-9)")
def test_gjk_symmetry_translation():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        a = BoxObstacle(Pose(rng.uniform(-2, 2, 3), random_quaternion(rng)), rng.uniform(0.05, 1.0, 3))
        b = BoxObstacle(Pose(rng.uniform(-2, 2, 3), random_quaternion(rng)), rng.uniform(0.05, 1.0, 3))
        shift = rng.uniform(-10, 10, 3)
        d = gjk_distance(a.hull(), b.hull())
        worst = max(worst, abs(d - gjk_distance(b.hull(), a.hull())),
                    abs(d - gjk_distance(a.hull().translated(shift), b.hull().translated(shift))))
    record(6, symmetry_err=worst)
    assert worst <= 1e-9


@criterion(7, "metric symmetry, identity, quaternion-sign and box-order invariance (exact)")
def test_metric_properties():
    rng = np.random.default_rng(9)
    cfg = SparkConfig()
    for _ in range(10_000):
        a = Pose(rng.uniform(-3, 3, 3), random_quaternion(rng))
        b = Pose(rng.uniform(-3, 3, 3), random_quaternion(rng))
        d = pose_distance(a, b, cfg.w_T)
        assert d == pose_distance(b, a, cfg.w_T)
        assert pose_distance(a, a, cfg.w_T) == 0.0
        assert pose_distance(a, Pose(b.translation, -b.orientation), cfg.w_T) == d
    for _ in range(10_000):
        p, q = random_spark_primitive(rng), random_spark_primitive(rng)
        d = spark_primitive_distance(p, q)
        assert d == spark_primitive_distance(q, p)
        assert spark_primitive_distance(p, p) == 0.0
        assert spark_primitive_distance(SparkPrimitive(p.box_b, p.box_a), q) == d
        flipped = BoxObstacle(Pose(p.box_a.pose.translation, -p.box_a.pose.orientation), p.box_a.size)
        assert spark_primitive_distance(SparkPrimitive(flipped, p.box_b), q) == d


@criterion(8, "FLAME round-trip bit-exact vs brute-force rasterization")
def test_flame_round_trip():
    rng = np.random.default_rng(10)
    n = 16
    for _ in range(50):
        boxes = [BoxObstacle(Pose(rng.uniform(0.25, 0.55, 3), random_quaternion(rng)), rng.uniform(0.02, 0.25, 3))
                 for _ in range(int(rng.integers(1, 6)))]
        tree = build_octree(boxes, resolution=0.05, depth=4, center=(0.4, 0.4, 0.4))
        oracle = brute_rasterize(boxes, tree.origin, 0.05, n)
        grid = np.zeros((n, n, n), dtype=bool)
        for p in flame_decompose(tree):
            i, j, k = (4 * np.asarray(p.grid_index)).tolist()
            assert not grid[i:i + 4, j:j + 4, k:k + 4].any()
            grid[i:i + 4, j:j + 4, k:k + 4] = p.voxels()
        assert np.array_equal(grid, oracle)


@criterion(8, "FLAME round-trip bit-exact vs brute-force rasterization")
def test_flame_hand_computed_blocks():
    single = BoxObstacle.axis_aligned((0.125, 0.175, 0.225), (0.05, 0.05, 0.05))
    (p,) = flame_decompose(build_octree([single], resolution=0.05, depth=4, center=(0.4, 0.4, 0.4)))
    # voxel (2, 3, 4) -> block (0, 0, 1), local (2, 3, 0), bit 16*2 + 4*3 + 0 = 44
    assert (p.grid_index, p.occupancy) == ((0, 0, 1), 1 << 44)
    full = BoxObstacle.axis_aligned((0.3, 0.3, 0.3), (0.2, 0.2, 0.2))
    (p,) = flame_decompose(build_octree([full], resolution=0.05, depth=4, center=(0.4, 0.4, 0.4)))
    assert (p.grid_index, p.occupancy) == ((1, 1, 1), FULL_BLOCK)


@criterion(9, "learn/verify closure; save/load preserves retrieval")
@pytest.mark.parametrize("fw", ["spark", "flame"])
def test_learn_verify_closure(small_shelf, chain, fw):
    db = small_shelf[fw + "_db"]
    strategy = make_strategy(fw)
    stored = 0
    for e in db.entries:
        ok = strategy.critical_matrix(chain, e.configs, [e.primitive])[:, 0]
        stored += len(ok)
        assert ok.all()
    record(9, **{f"{fw}_entries": len(db), f"{fw}_configs": stored})
    assert stored > 0


@criterion(9, "learn/verify closure; save/load preserves retrieval")
@pytest.mark.parametrize("fw", ["spark", "flame"])
def test_save_load_probes(small_shelf, tmp_path, fw):
    db = small_shelf[fw + "_db"]
    db_save(db, tmp_path / "db.json")
    loaded = db_load(tmp_path / "db.json")
    assert loaded.snapshot() == db.snapshot()
    strategy = make_strategy(fw)
    for _, scene, _ in small_shelf["problems"][:20]:
        prims = strategy.decompose(scene)
        a = [(s.source, s.configs.tolist()) for s in strategy.retrieve(db, prims)]
        b = [(s.source, s.configs.tolist()) for s in strategy.retrieve(loaded, prims)]
        assert a == b


@criterion(10, "sampler Monte-Carlo statistics")
def test_sampler_statistics():
    lo, hi = np.full(3, -3.0), np.full(3, 3.0)
    rng = np.random.default_rng(11)
    c = np.array([0.3, -0.5, 1.0])
    x = np.array([build_local_sampler([c], 0.2).sample(rng) for _ in range(10_000)])
    assert np.all(np.abs(x.mean(axis=0) - c) < 0.01)
    assert np.all(np.abs(x.std(axis=0) - 0.2) < 0.02)
    two = build_local_sampler([np.zeros(3), np.full(3, 2.0)], 0.2)
    x = np.array([two.sample(rng) for _ in range(10_000)])
    assert abs((np.linalg.norm(x, axis=1) < np.linalg.norm(x - 2.0, axis=1)).mean() - 0.5) <= 0.02
    gs = make_global_sampler([build_local_sampler([np.zeros(3)], 0.2, source=0)], 0.5, lo, hi)
    x = np.array([gs.sample(rng) for _ in range(10_000)])
    far = np.any(np.abs(x) > 0.8, axis=1).mean()
    assert abs(far - 0.5 * (1 - (1.6 / 6) ** 3)) <= 0.03
    uni = make_global_sampler((), 0.5, lo, hi)
    assert uni.lam == 1.0
    x = np.array([uni.sample(rng) for _ in range(10_000)])
    for j in range(3):
        assert stats.kstest(x[:, j], stats.uniform(loc=-3, scale=6).cdf).pvalue > 0.01


@criterion(11, "completeness guard: lambda=0.5 solves all uniform-solved problems within 4x uniform median")
def test_completeness_guard(small_shelf, chain):
    db = small_shelf["spark_db"]
    known = {r.trial: r for r in small_shelf["uniform"]}
    biased_known = {r.trial: r for r in small_shelf["spark"][100]}
    problems = B.paired_problems("small_shelf", ALL_AXES, GUARD_PROBLEMS, SEED, "pick", chain,
                                 indices=range(TEST_SCENES, GUARD_PROBLEMS))
    extra = B.evaluate({"uniform": None, "spark": db}, problems, SEED, TIMEOUT, chain, tag="guard", lam=0.5)
    uniform = list(known.values()) + [r for r in extra if r.framework == "uniform"]
    biased = list(biased_known.values()) + [r for r in extra if r.framework == "spark"]
    by_trial = {r.trial: r for r in biased}
    solved = [r for r in uniform if r.outcome == "solved"]
    budget = 4 * statistics.median(r.total_time for r in solved)
    missed = [r.trial for r in solved if by_trial[r.trial].outcome != "solved"]
    slow = [r.trial for r in solved if by_trial[r.trial].total_time > budget]
    record(11, problems=len(uniform), uniform_solved=len(solved), budget_s=budget,
           biased_max_s=max(by_trial[r.trial].total_time for r in solved), missed=len(missed), over_budget=len(slow))
    assert len(uniform) == GUARD_PROBLEMS
    assert not missed and not slow
