"""Seeded scene families (small shelf, large shelf, box on table) with pick/place tasks.

All geometry is in the robot base frame, meters and radians. Cylindrical
objects are represented by their bounding boxes. The nominal dimensions are
listed in ``FAMILIES`` and ``GEOMETRY``; they are sized for the shipped
``arm8`` chain.

Shelf frame: origin at the front edge of the lowest shelf surface, centered
in width, x pointing into the shelf, z up. The shelf frame sits
``SHELF_DISTANCE`` in front of the robot; yaw variation rotates it about the
robot base z axis, X/Y/Z variation then translates it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import BoxObstacle, Pose, quat_from_axis_angle, quat_multiply
from .robot import CollisionChecker, KinematicChain, attach_object, load_chain, solve_ik

SCHEMA_VERSION = 1
VARIATION_AXES = ("X", "Y", "Z", "yaw")
TASK_KINDS = ("pick", "place")


@dataclass(frozen=True)
class FamilySpec:
    name: str
    yaw: float  # half-range, radians
    xy: float  # half-range, meters
    z: float | None  # half-range, meters; None if the family has no Z variation
    tasks: tuple[str, ...]


FAMILIES = {
    "small_shelf": FamilySpec("small_shelf", math.pi / 2, 0.10, 0.25, ("pick",)),
    "large_shelf": FamilySpec("large_shelf", math.pi / 2, 0.10, None, ("pick", "place")),
    "box_table": FamilySpec("box_table", math.pi / 6, 0.10, None, ("pick",)),
}

GEOMETRY = {
    "panel": 0.02,
    "object_size": (0.06, 0.06, 0.12),
    "object_clearance": 0.05,
    "small_shelf": {"distance": 0.6, "width": 0.48, "depth": 0.35, "height": 0.3, "z0": 0.75},
    "large_shelf": {"distance": 0.6, "width": 0.6, "depth": 0.35, "height": 0.3,
                    "floors": (0.45, 0.77, 1.09), "objects": (7, 9)},
    "box_table": {"table_center": (0.8, 0.0, 0.36), "table_size": (0.7, 1.0, 0.72),
                  "box_center": (0.7, 0.0), "box_outer": (0.3, 0.3, 0.2), "cube": 0.05},
}

# nominal (no-variation) object layouts, shelf frame (x, y)
_NOMINAL_SMALL = ((0.26, -0.08), (0.12, 0.1), (0.2, 0.13))
_NOMINAL_LARGE = (
    ((0.25, -0.15), (0.1, 0.05), (0.2, 0.17)),
    ((0.1, -0.2), (0.14, 0.17)),
    ((0.26, 0.1), (0.08, -0.12), (0.16, 0.2)),
)
_NOMINAL_CUBE = (0.03, -0.04)

LAYOUT_ATTEMPTS = 30
POSE_ATTEMPTS = 40
IK_RESTARTS = 80
IK_ITERATIONS = 60
# attempts seeded near the aimed ready posture before uniform restarts
IK_NEAR_SEEDS = 12
IK_SEED_SPREAD = 0.3
# half-width of the lane in front of a grasp target that must be free of other objects
APPROACH_CORRIDOR = 0.1


class SceneGenerationError(RuntimeError):
    pass


class SceneFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Task:
    kind: str
    start: np.ndarray
    goal: np.ndarray
    attached: BoxObstacle | None = None  # tool frame, place tasks only

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float))

    def __eq__(self, other) -> bool:
        return (isinstance(other, Task) and self.kind == other.kind
                and np.array_equal(self.start, other.start) and np.array_equal(self.goal, other.goal)
                and self.attached == other.attached)

    def chain_for(self, chain: KinematicChain) -> KinematicChain:
        """``chain`` with the carried object attached, if any."""
        return attach_object(chain, self.attached) if self.attached is not None else chain


@dataclass(frozen=True, eq=False)
class Scene:
    obstacles: tuple[BoxObstacle, ...]
    family: str
    seed: int
    variation: tuple[str, ...]
    params: dict = field(default_factory=dict)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Scene) and self.obstacles == other.obstacles
                and self.family == other.family and self.seed == other.seed
                and self.variation == other.variation and self.params == other.params)

    def __iter__(self):
        return iter(self.obstacles)

    def __len__(self) -> int:
        return len(self.obstacles)


def parse_variation(variation) -> tuple[str, ...]:
    """Canonical variation tuple from an iterable or a string like ``"X,Y,Z,yaw"``."""
    if variation is None:
        return ()
    if isinstance(variation, str):
        variation = [v for v in variation.replace(" ", ",").split(",") if v]
    lookup = {a.lower(): a for a in VARIATION_AXES}
    out = set()
    for v in variation:
        if v.lower() not in lookup:
            raise ValueError(f"unknown variation axis {v!r}; expected a subset of {VARIATION_AXES}")
        out.add(lookup[v.lower()])
    return tuple(a for a in VARIATION_AXES if a in out)


def _yaw_quat(yaw: float) -> np.ndarray:
    return quat_from_axis_angle((0.0, 0.0, 1.0), yaw)


def _frame(x: float, y: float, z: float, yaw: float) -> Pose:
    return Pose((x, y, z), _yaw_quat(yaw))


def _box_in(frame: Pose, center, size) -> BoxObstacle:
    return BoxObstacle(frame.compose(Pose(center)), size)


def _draw_params(spec: FamilySpec, variation: tuple[str, ...], rng) -> dict:
    if "Z" in variation and spec.z is None:
        raise ValueError(f"family {spec.name} has no Z variation")
    params = {"X": 0.0, "Y": 0.0, "Z": 0.0, "yaw": 0.0}
    for axis in VARIATION_AXES:
        if axis in variation:
            half = {"X": spec.xy, "Y": spec.xy, "Z": spec.z, "yaw": spec.yaw}[axis]
            params[axis] = float(rng.uniform(-half, half))
    return params


def _shelf_frame(distance: float, params: dict) -> Pose:
    yaw = params["yaw"]
    c, s = math.cos(yaw), math.sin(yaw)
    return _frame(c * distance + params["X"], s * distance + params["Y"], params["Z"], yaw)


def _shelf_panels(frame: Pose, width: float, depth: float, floors, height: float) -> list[BoxObstacle]:
    """Horizontal boards at each floor plus a top board, two sides and a back."""
    t = GEOMETRY["panel"]
    top = floors[-1] + height
    boards = [_box_in(frame, (depth / 2, 0.0, z - t / 2), (depth, width + 2 * t, t)) for z in floors]
    boards.append(_box_in(frame, (depth / 2, 0.0, top + t / 2), (depth, width + 2 * t, t)))
    lo = floors[0] - t
    hi = top + t
    side_h = top - floors[0]
    mid = floors[0] + side_h / 2
    boards.append(_box_in(frame, (depth / 2, -(width + t) / 2, mid), (depth, t, side_h)))
    boards.append(_box_in(frame, (depth / 2, (width + t) / 2, mid), (depth, t, side_h)))
    boards.append(_box_in(frame, (depth + t / 2, 0.0, (lo + hi) / 2), (t, width + 2 * t, hi - lo)))
    return boards


def _place_objects(rng, n: int, width: float, depth: float, reserved=()) -> list[tuple[float, float]] | None:
    """Rejection-sample ``n`` object footprints with pairwise clearance; None on failure."""
    sx, sy, _ = GEOMETRY["object_size"]
    gap = GEOMETRY["object_clearance"]
    margin = 0.01
    placed = list(reserved)
    out = []
    for _ in range(n):
        for _ in range(200):
            x = rng.uniform(sx / 2 + margin, depth - sx / 2 - margin)
            y = rng.uniform(-width / 2 + sy / 2 + margin, width / 2 - sy / 2 - margin)
            if all(max(abs(x - px) - sx, abs(y - py) - sy) >= gap for px, py in placed):
                placed.append((x, y))
                out.append((x, y))
                break
        else:
            return None
    return out


def _approach_clear(layout, target) -> bool:
    """No other object on the same board sits in front of ``target`` within the gripper corridor."""
    return all(not (x < target[0] and abs(y - target[1]) < APPROACH_CORRIDOR)
               for x, y in layout if (x, y) != tuple(target))


def _object_box(frame: Pose, xy, floor: float) -> BoxObstacle:
    size = GEOMETRY["object_size"]
    return _box_in(frame, (xy[0], xy[1], floor + size[2] / 2), size)


def _grasp_pose(frame: Pose, center) -> Pose:
    """Tool frame at the object center, approaching along the shelf depth axis."""
    return Pose(center, frame.orientation)


def _top_grasp_pose(center, yaw: float) -> Pose:
    # tool x pointing down
    down = quat_from_axis_angle((0.0, 1.0, 0.0), math.pi / 2)
    return Pose(center, quat_multiply(_yaw_quat(yaw), down))


def _farthest(boxes: list[BoxObstacle]) -> int:
    return int(np.argmax([np.linalg.norm(b.center) for b in boxes]))


def _aimed_seed(chain: KinematicChain, target: Pose) -> np.ndarray:
    """The chain's ``ready`` posture with its first vertical revolute joint turned toward ``target``."""
    names = chain.named_configurations
    seed = chain.named("ready") if "ready" in names else np.zeros(chain.dof)
    for k, joint in enumerate(chain.joints):
        if joint.kind == "revolute" and abs(joint.axis[2]) > 0.99:
            seed[k] = math.atan2(target.translation[1], target.translation[0]) * np.sign(joint.axis[2])
            break
    return np.clip(seed, chain.lower, chain.upper)


def _ik(chain: KinematicChain, target: Pose, checker: CollisionChecker, rng) -> np.ndarray | None:
    """Collision-free IK solution, preferring postures near the aimed ready pose.

    Seeding near one canonical posture keeps goals on the same arm branch
    across scenes; uniform restarts are the fallback.
    """
    seed = _aimed_seed(chain, target)
    for k in range(IK_NEAR_SEEDS):
        start = seed if k == 0 else np.clip(seed + rng.normal(0.0, IK_SEED_SPREAD, chain.dof),
                                            chain.lower, chain.upper)
        q = solve_ik(chain, target, start, rng=rng, restarts=0, max_iter=IK_ITERATIONS,
                     accept=checker.is_valid)
        if q is not None:
            return q
    return solve_ik(chain, target, seed, rng=rng, restarts=IK_RESTARTS, max_iter=IK_ITERATIONS,
                    accept=checker.is_valid)


def _stow(chain: KinematicChain) -> np.ndarray:
    if "stow" in chain.named_configurations:
        return chain.named("stow")
    return np.clip(np.zeros(chain.dof), chain.lower, chain.upper)


def _small_shelf(params, randomize, rng, chain, kind):
    g = GEOMETRY["small_shelf"]
    frame = _shelf_frame(g["distance"], params)
    panels = _shelf_panels(frame, g["width"], g["depth"], (g["z0"],), g["height"])
    layout = _place_objects(rng, 3, g["width"], g["depth"]) if randomize else list(_NOMINAL_SMALL)
    if layout is None:
        return None
    objects = [_object_box(frame, xy, g["z0"]) for xy in layout]
    obstacles = panels + objects
    if kind is None:
        return obstacles, None
    far = _farthest(objects)
    if not _approach_clear(layout, layout[far]):
        return None
    target = objects[far]
    checker = CollisionChecker(chain, obstacles)
    start = _stow(chain)
    if not checker.is_valid(start):
        return None
    goal = _ik(chain, _grasp_pose(frame, target.center), checker, rng)
    if goal is None:
        return None
    return obstacles, Task(kind, start, goal)


def _large_shelf(params, randomize, rng, chain, kind):
    g = GEOMETRY["large_shelf"]
    frame = _shelf_frame(g["distance"], params)
    floors = g["floors"]
    panels = _shelf_panels(frame, g["width"], g["depth"], floors, g["height"])
    sx = GEOMETRY["object_size"][0]
    # placement slot at the back of the middle shelf, kept free of objects
    slot = (g["depth"] - sx / 2 - 0.02, float(rng.uniform(-0.15, 0.15)) if randomize else 0.0)
    if randomize:
        total = int(rng.integers(g["objects"][0], g["objects"][1] + 1))
        counts = [total // 3 + (1 if i < total % 3 else 0) for i in range(3)]
        counts = [counts[i] for i in rng.permutation(3)]
        layouts = []
        for level, n in enumerate(counts):
            lay = _place_objects(rng, n, g["width"], g["depth"], reserved=[slot] if level == 1 else ())
            if lay is None:
                return None
            layouts.append(lay)
    else:
        layouts = [list(lay) for lay in _NOMINAL_LARGE]
    objects, levels = [], []
    for level, lay in enumerate(layouts):
        for xy in lay:
            objects.append(_object_box(frame, xy, floors[level]))
            levels.append(level)
    flat = [xy for lay in layouts for xy in lay]
    start_pose = _stow(chain)
    if kind is None:
        return panels + objects, None
    if kind == "pick":
        obstacles = panels + objects
        far = _farthest(objects)
        if not _approach_clear(layouts[levels[far]], flat[far]):
            return None
        checker = CollisionChecker(chain, obstacles)
        if not checker.is_valid(start_pose):
            return None
        goal = _ik(chain, _grasp_pose(frame, objects[far].center), checker, rng)
        return None if goal is None else (obstacles, Task("pick", start_pose, goal))
    # place: start holding the farthest-back object of the top or bottom shelf
    candidates = [i for i, lv in enumerate(levels) if lv in (0, 2)]
    held = candidates[_farthest([objects[i] for i in candidates])]
    if not (_approach_clear(layouts[levels[held]], flat[held]) and _approach_clear(layouts[1], slot)):
        return None
    obstacles = panels + [o for i, o in enumerate(objects) if i != held]
    size = GEOMETRY["object_size"]
    carried = BoxObstacle(Pose.identity(), size)
    loaded = attach_object(chain, carried)
    checker = CollisionChecker(loaded, obstacles)
    start = _ik(loaded, _grasp_pose(frame, objects[held].center), checker, rng)
    if start is None:
        return None
    place_center = frame.transform_points(np.array([[slot[0], slot[1], floors[1] + size[2] / 2]]))[0]
    goal = _ik(loaded, _grasp_pose(frame, place_center), checker, rng)
    if goal is None:
        return None
    return obstacles, Task("place", start, goal, carried)


def _box_table(params, randomize, rng, chain, kind):
    g = GEOMETRY["box_table"]
    t = GEOMETRY["panel"]
    table = BoxObstacle.axis_aligned(g["table_center"], g["table_size"])
    top = g["table_center"][2] + g["table_size"][2] / 2
    bx, by = g["box_center"]
    frame = _frame(bx + params["X"], by + params["Y"], top, params["yaw"])
    ox, oy, oz = g["box_outer"]
    walls = [
        _box_in(frame, (0.0, 0.0, t / 2), (ox, oy, t)),
        _box_in(frame, (-(ox - t) / 2, 0.0, oz / 2), (t, oy, oz)),
        _box_in(frame, ((ox - t) / 2, 0.0, oz / 2), (t, oy, oz)),
        _box_in(frame, (0.0, -(oy - t) / 2, oz / 2), (ox - 2 * t, t, oz)),
        _box_in(frame, (0.0, (oy - t) / 2, oz / 2), (ox - 2 * t, t, oz)),
    ]
    c = g["cube"]
    if randomize:
        room = (ox - 2 * t - c) / 2 - 0.01
        cxy = rng.uniform(-room, room, 2)
    else:
        cxy = _NOMINAL_CUBE
    cube = _box_in(frame, (cxy[0], cxy[1], t + c / 2), (c, c, c))
    obstacles = [table] + walls + [cube]
    if kind is None:
        return obstacles, None
    checker = CollisionChecker(chain, obstacles)
    start = _stow(chain)
    if not checker.is_valid(start):
        return None
    goal = _ik(chain, _top_grasp_pose(cube.center, params["yaw"]), checker, rng)
    return None if goal is None else (obstacles, Task(kind, start, goal))


_BUILDERS = {"small_shelf": _small_shelf, "large_shelf": _large_shelf, "box_table": _box_table}


def generate_scene(family: str, variation=(), seed: int = 0, task: str | None = "pick",
                   chain: KinematicChain | None = None) -> tuple[Scene, Task | None]:
    """Draw a scene of ``family`` and a task with collision-free start and goal.

    Variation parameters are drawn once per pose attempt; object layouts and
    IK are retried under the same pose first, so the pose marginals stay
    uniform unless a pose is outright infeasible. ``task=None`` skips task
    construction and returns the first drawn scene with no task.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown scene family {family!r}; expected one of {sorted(FAMILIES)}")
    spec = FAMILIES[family]
    if task is not None and task not in spec.tasks:
        raise ValueError(f"family {family} does not support {task!r} tasks")
    variation = parse_variation(variation)
    chain = chain if chain is not None else load_chain("arm8")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(list(FAMILIES).index(family),)))
    randomize = bool(variation)
    build = _BUILDERS[family]
    for _ in range(POSE_ATTEMPTS if randomize else 1):
        params = _draw_params(spec, variation, rng)
        for _ in range(LAYOUT_ATTEMPTS):
            made = build(params, randomize, rng, chain, task)
            if made is not None:
                obstacles, t = made
                scene = Scene(tuple(obstacles), family, int(seed), variation, params)
                return scene, t
    raise SceneGenerationError(
        f"no valid {task} task for {family} with variation {variation} and seed {seed}"
    )


# serialization


def _box_to_json(box: BoxObstacle) -> dict:
    return {"translation": box.pose.translation.tolist(), "orientation": box.pose.orientation.tolist(),
            "size": box.size.tolist()}


def _box_from_json(d) -> BoxObstacle:
    return BoxObstacle(Pose(d["translation"], d["orientation"]), d["size"])


def scene_to_dict(scene: Scene, task: Task | None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "family": scene.family,
        "seed": scene.seed,
        "variation": list(scene.variation),
        "params": scene.params,
        "obstacles": [_box_to_json(b) for b in scene.obstacles],
        "task": None if task is None else {
            "kind": task.kind,
            "start": task.start.tolist(),
            "goal": task.goal.tolist(),
            "attached": None if task.attached is None else _box_to_json(task.attached),
        },
    }


def scene_from_dict(d: dict) -> tuple[Scene, Task | None]:
    if not isinstance(d, dict):
        raise SceneFormatError("scene file must hold a JSON object")
    if d.get("schema_version") != SCHEMA_VERSION:
        raise SceneFormatError(f"unsupported scene schema version {d.get('schema_version')!r}")
    if d.get("family") not in FAMILIES:
        raise SceneFormatError(f"unknown scene family {d.get('family')!r}")
    try:
        scene = Scene(
            tuple(_box_from_json(b) for b in d["obstacles"]),
            d["family"],
            int(d["seed"]),
            parse_variation(d["variation"]),
            {k: float(v) for k, v in d.get("params", {}).items()},
        )
        raw = d["task"]
        task = None
        if raw is not None:
            for key in ("kind", "start", "goal"):
                if key not in raw:
                    raise SceneFormatError(f"task is missing {key!r}")
            attached = raw.get("attached")
            task = Task(raw["kind"], raw["start"], raw["goal"],
                        None if attached is None else _box_from_json(attached))
            if task.start.shape != task.goal.shape or task.start.ndim != 1:
                raise SceneFormatError("task start and goal must be equal-length vectors")
    except SceneFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneFormatError(f"malformed scene: {exc}") from exc
    return scene, task


def scene_save(path, scene: Scene, task: Task | None = None) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene, task), indent=1))


def scene_load(path) -> tuple[Scene, Task | None]:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SceneFormatError(f"cannot read scene {path}: {exc}") from exc
    return scene_from_dict(d)
