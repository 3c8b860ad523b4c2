"""Scene families, task validity and scene files."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest
from scipy import stats

from expplan.robot import CollisionChecker, in_collision, load_chain
from expplan.scenes import (
    FAMILIES,
    SceneFormatError,
    generate_scene,
    parse_variation,
    scene_from_dict,
    scene_load,
    scene_save,
    scene_to_dict,
)

ARM = load_chain("arm8")
ALL = ("X", "Y", "Z", "yaw")
PANELS = {"small_shelf": 5, "large_shelf": 7}


def assert_task_valid(scene, task):
    chain = task.chain_for(ARM)
    assert not in_collision(chain, task.start, scene.obstacles)
    assert not in_collision(chain, task.goal, scene.obstacles)


def test_deterministic():
    a = generate_scene("small_shelf", ALL, seed=5)
    b = generate_scene("small_shelf", ALL, seed=5)
    assert a == b
    assert a[0] != generate_scene("small_shelf", ALL, seed=6)[0]


def test_nominal_scene_is_fixed():
    ref, _ = generate_scene("small_shelf", (), seed=0)
    for seed in (1, 2, 3):
        scene, task = generate_scene("small_shelf", (), seed=seed)
        assert scene.obstacles == ref.obstacles
        assert scene.params == {"X": 0.0, "Y": 0.0, "Z": 0.0, "yaw": 0.0}
        assert_task_valid(scene, task)


@pytest.mark.parametrize("family,kind", [("small_shelf", "pick"), ("large_shelf", "pick"),
                                         ("large_shelf", "place"), ("box_table", "pick")])
def test_nominal_scene_has_every_task(family, kind):
    scene, task = generate_scene(family, (), seed=0, task=kind)
    assert task.kind == kind
    assert_task_valid(scene, task)


@pytest.mark.parametrize("family,kind", [("small_shelf", "pick"), ("large_shelf", "pick"),
                                         ("large_shelf", "place"), ("box_table", "pick")])
def test_tasks_are_collision_free_and_counts_match(family, kind):
    variation = ALL if FAMILIES[family].z is not None else ("X", "Y", "yaw")
    for seed in range(4):
        scene, task = generate_scene(family, variation, seed=seed, task=kind)
        assert task.kind == kind
        assert_task_valid(scene, task)
        n = len(scene.obstacles)
        if family == "small_shelf":
            assert n == PANELS[family] + 3
        elif family == "large_shelf":
            # the held object leaves the scene in place tasks
            objects = n - PANELS[family] + (kind == "place")
            assert 7 <= objects <= 9
            assert (task.attached is not None) == (kind == "place")
        else:
            assert n == 1 + 5 + 1


def test_variation_ranges_with_tasks():
    spec = FAMILIES["small_shelf"]
    for seed in range(15):
        p = generate_scene("small_shelf", ALL, seed=seed)[0].params
        assert abs(p["X"]) <= spec.xy and abs(p["Y"]) <= spec.xy
        assert abs(p["Z"]) <= spec.z and abs(p["yaw"]) <= spec.yaw


def test_variation_marginals_uniform():
    spec = FAMILIES["small_shelf"]
    params = [generate_scene("small_shelf", ALL, seed=s, task=None)[0].params for s in range(500)]
    half = {"X": spec.xy, "Y": spec.xy, "Z": spec.z, "yaw": spec.yaw}
    assert half == {"X": 0.1, "Y": 0.1, "Z": 0.25, "yaw": math.pi / 2}
    for axis, h in half.items():
        x = np.array([p[axis] for p in params])
        assert np.all(np.abs(x) <= h)
        assert stats.kstest(x, stats.uniform(loc=-h, scale=2 * h).cdf).pvalue > 0.01


def test_family_ranges():
    assert FAMILIES["large_shelf"].yaw == pytest.approx(math.pi / 2)
    assert FAMILIES["box_table"].yaw == pytest.approx(math.pi / 6)
    assert FAMILIES["box_table"].xy == FAMILIES["large_shelf"].xy == 0.1


def test_only_requested_axes_vary():
    for seed in range(20):
        p = generate_scene("small_shelf", "yaw", seed=seed, task=None)[0].params
        assert p["X"] == p["Y"] == p["Z"] == 0.0


def test_invalid_requests():
    with pytest.raises(ValueError):
        generate_scene("kitchen")
    with pytest.raises(ValueError):
        generate_scene("small_shelf", ["roll"])
    with pytest.raises(ValueError):
        generate_scene("box_table", ["Z"])
    with pytest.raises(ValueError):
        generate_scene("small_shelf", (), task="place")


def test_parse_variation():
    assert parse_variation("yaw,x, Z") == ("X", "Z", "yaw")
    assert parse_variation(None) == ()
    assert parse_variation(["Y", "y"]) == ("Y",)


@pytest.mark.parametrize("family,kind", [("small_shelf", "pick"), ("large_shelf", "place")])
def test_round_trip(tmp_path, family, kind):
    scene, task = generate_scene(family, ("X", "yaw"), seed=3, task=kind)
    path = tmp_path / "scene.json"
    scene_save(path, scene, task)
    assert scene_load(path) == (scene, task)
    CollisionChecker(task.chain_for(ARM), scene_load(path)[0].obstacles)


def test_load_errors(tmp_path):
    scene, task = generate_scene("small_shelf", (), seed=0)
    d = scene_to_dict(scene, task)
    bad = dict(d, family="kitchen")
    with pytest.raises(SceneFormatError, match="family"):
        scene_from_dict(bad)
    bad = json.loads(json.dumps(d))
    del bad["task"]["goal"]
    with pytest.raises(SceneFormatError, match="goal"):
        scene_from_dict(bad)
    with pytest.raises(SceneFormatError, match="version"):
        scene_from_dict(dict(d, schema_version=2))
    path = tmp_path / "broken.json"
    path.write_text("{")
    with pytest.raises(SceneFormatError):
        scene_load(path)
