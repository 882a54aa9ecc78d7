"""2D geometric backends: world snapshots, stream samplers, transition
feasibility, and motion cost.

Bodies are oriented rectangles; regions and the workspace are axis-aligned
rectangles.  Collision uses the separating-axis test.  Motion feasibility
sweeps the footprint along piecewise-linear paths; motion cost is path
length times the body's footprint width (proportional to swept area).
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from typing import Any, Sequence

from .model import GroundOperator, Obj, Problem

Pose = tuple[float, float, float]  # x, y, theta

SWEEP_STEP = 0.02  # m between swept collision checks
WAYPOINT_ATTEMPTS = 3

HEIGHT_RANK = {"short": 0, "tall": 1}


class BackendError(Exception):
    pass


class DomainMismatchError(BackendError):
    """Stream or action schema unknown to this backend."""


# --- rectangle math -----------------------------------------------------------

def rect_corners(cx: float, cy: float, w: float, h: float, theta: float):
    c, s = math.cos(theta), math.sin(theta)
    hw, hh = w / 2.0, h / 2.0
    return [
        (cx + c * dx - s * dy, cy + s * dx + c * dy)
        for dx, dy in ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh))
    ]


def _project(points, ax, ay):
    dots = [px * ax + py * ay for px, py in points]
    return min(dots), max(dots)


def rects_overlap(a: tuple[float, float, float, float, float],
                  b: tuple[float, float, float, float, float]) -> bool:
    """Separating-axis overlap test for two oriented rectangles
    (cx, cy, w, h, theta).  Touching edges do not count as overlap."""
    # quick bounding-circle reject
    ra = math.hypot(a[2], a[3]) / 2.0
    rb = math.hypot(b[2], b[3]) / 2.0
    if math.hypot(a[0] - b[0], a[1] - b[1]) >= ra + rb:
        return False
    ca = rect_corners(*a)
    cb = rect_corners(*b)
    for theta in (a[4], a[4] + math.pi / 2, b[4], b[4] + math.pi / 2):
        ax, ay = math.cos(theta), math.sin(theta)
        lo1, hi1 = _project(ca, ax, ay)
        lo2, hi2 = _project(cb, ax, ay)
        if hi1 <= lo2 + 1e-12 or hi2 <= lo1 + 1e-12:
            return False
    return True


def rect_inside_aabb(rect: tuple[float, float, float, float, float],
                     xmin: float, xmax: float, ymin: float, ymax: float) -> bool:
    return all(
        xmin - 1e-9 <= px <= xmax + 1e-9 and ymin - 1e-9 <= py <= ymax + 1e-9
        for px, py in rect_corners(*rect)
    )


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def _angular_distance(a: float, b: float) -> float:
    return abs(_wrap_angle(a - b))


# --- environment state --------------------------------------------------------

@dataclass(frozen=True)
class EnvState:
    """Immutable snapshot of the geometric world."""

    body_poses: tuple[tuple[str, Pose], ...] = ()
    flags: frozenset[tuple[str, str]] = frozenset()
    aux: Any = ()

    def pose(self, body: str) -> Pose:
        for name, p in self.body_poses:
            if name == body:
                return p
        raise KeyError(body)

    def with_pose(self, body: str, pose: Pose) -> "EnvState":
        poses = tuple(
            (name, pose if name == body else p) for name, p in self.body_poses
        )
        return EnvState(poses, self.flags, self.aux)

    def with_flag(self, flag: str, body: str) -> "EnvState":
        return EnvState(self.body_poses, self.flags | {(flag, body)}, self.aux)


@dataclass
class StreamSample:
    instance: str
    values: tuple = ()
    feasible: bool = True
    cost_delta: float = 0.0


@dataclass
class TransitionOutcome:
    state: EnvState
    feasible: bool
    cost_delta: float = 0.0


# --- backend base -------------------------------------------------------------

class EnvironmentBackend:
    """One backend instance is confined to a single search.  Snapshots are
    immutable values and may be shared freely."""

    name = ""

    def __init__(self, problem: Problem, instance_seed: int = 0):
        self.problem = problem
        self.instance_seed = instance_seed
        self._snapshots: dict[int, EnvState] = {}
        self._next_handle = 0
        self.current = self.initial_state()

    # -- snapshot bookkeeping
    def snapshot(self, state: EnvState) -> int:
        handle = self._next_handle
        self._next_handle += 1
        self._snapshots[handle] = state
        return handle

    def restore(self, handle: int) -> EnvState:
        try:
            state = self._snapshots[handle]
        except KeyError:
            raise BackendError(f"dangling snapshot handle {handle}")
        self.current = state
        return state

    def set_state(self, state: EnvState) -> None:
        self.current = state

    # -- to implement
    def initial_state(self) -> EnvState:
        raise NotImplementedError

    def sample_stream(self, state: EnvState, op: GroundOperator,
                      bindings: dict[Obj, Any], rng: random.Random) -> StreamSample:
        raise NotImplementedError

    def apply_transition(self, state: EnvState, op: GroundOperator,
                         bindings: dict[Obj, Any]) -> TransitionOutcome:
        raise NotImplementedError


# --- geometry config shared by the tabletop backends --------------------------

@dataclass
class BodySpec:
    w: float
    h: float
    height_class: str
    init_pose: Pose


@dataclass
class SceneConfig:
    workspace: tuple[float, float, float, float]  # xmin xmax ymin ymax
    regions: dict[str, tuple[float, float, float, float]]  # cx cy w h
    bodies: dict[str, BodySpec]
    obstacles: list[tuple[float, float, float, float, float]]
    theta_mode: str = "free"  # "free" | "axis"


def parse_scene(geometry: tuple) -> SceneConfig:
    workspace = (0.0, 1.0, 0.0, 1.0)
    regions: dict[str, tuple[float, float, float, float]] = {}
    bodies: dict[str, BodySpec] = {}
    obstacles: list[tuple[float, float, float, float, float]] = []
    theta_mode = "free"
    for entry in geometry:
        head = entry[0]
        if head == "workspace":
            workspace = tuple(float(v) for v in entry[1:5])
        elif head == "theta-mode":
            theta_mode = str(entry[1])
        elif head == "region":
            regions[str(entry[1])] = tuple(float(v) for v in entry[2:6])
        elif head == "body":
            name, w, h, cls, x, y, th = entry[1:8]
            bodies[str(name)] = BodySpec(float(w), float(h), str(cls),
                                         (float(x), float(y), float(th)))
        elif head == "obstacle":
            obstacles.append(tuple(float(v) for v in entry[1:6]))
        else:
            raise BackendError(f"unknown geometry entry {head!r}")
    return SceneConfig(workspace, regions, bodies, obstacles, theta_mode)


class TabletopBackend(EnvironmentBackend):
    """Shared machinery for the pose-sampling pick-and-place backends."""

    def __init__(self, problem: Problem, instance_seed: int = 0):
        self.scene = parse_scene(problem.geometry)
        # concrete pose objects take their values from the scene
        self.initial_pose_values: dict[str, Pose] = {}
        for l in problem.init.literals:
            if l.predicate == "atpose":
                body, pose_obj = l.args
                self.initial_pose_values[pose_obj.name] = self.scene.bodies[body.name].init_pose
        super().__init__(problem, instance_seed)

    def initial_state(self) -> EnvState:
        poses = tuple(
            sorted((name, spec.init_pose) for name, spec in self.scene.bodies.items())
        )
        return EnvState(poses)

    # -- geometric helpers
    def footprint(self, body: str, pose: Pose):
        spec = self.scene.bodies[body]
        return (pose[0], pose[1], spec.w, spec.h, pose[2])

    def concrete_value(self, obj: Obj, bindings: dict[Obj, Any]):
        if obj.optimistic:
            try:
                return bindings[obj]
            except KeyError:
                raise BackendError(f"unbound optimistic input {obj.name}")
        try:
            return self.initial_pose_values[obj.name]
        except KeyError:
            raise BackendError(f"object {obj.name} has no geometric value")

    def pose_collides(self, body: str, pose: Pose, state: EnvState,
                      ignore: Sequence[str] = ()) -> bool:
        fp = self.footprint(body, pose)
        for other, opose in state.body_poses:
            if other == body or other in ignore:
                continue
            if rects_overlap(fp, self.footprint(other, opose)):
                return True
        return any(rects_overlap(fp, ob) for ob in self.scene.obstacles)

    def sample_region_pose(self, body: str, region: str,
                           rng: random.Random) -> Pose | None:
        """Uniform (x, y, theta) with the footprint fully inside the region;
        None when the footprint cannot fit at the drawn angle.  A single
        draw: retries are the tree's job."""
        cx, cy, w, h = self.scene.regions[region]
        spec = self.scene.bodies[body]
        theta = 0.0 if self.scene.theta_mode == "axis" else rng.uniform(-math.pi, math.pi)
        c, s = abs(math.cos(theta)), abs(math.sin(theta))
        # half-extents of the rotated footprint's bounding box
        ex = (spec.w * c + spec.h * s) / 2.0
        ey = (spec.w * s + spec.h * c) / 2.0
        if 2 * ex > w or 2 * ey > h:
            return None
        x = rng.uniform(cx - w / 2 + ex, cx + w / 2 - ex)
        y = rng.uniform(cy - h / 2 + ey, cy + h / 2 - ey)
        return (x, y, theta)

    def sweep_collides(self, body: str, start: Pose, end: Pose,
                       state: EnvState) -> bool:
        dist = math.hypot(end[0] - start[0], end[1] - start[1])
        steps = max(2, int(math.ceil(dist / SWEEP_STEP)) + 1)
        dth = _wrap_angle(end[2] - start[2])
        for i in range(steps + 1):
            t = i / steps
            pose = (
                start[0] + t * (end[0] - start[0]),
                start[1] + t * (end[1] - start[1]),
                start[2] + t * dth,
            )
            if self.pose_collides(body, pose, state):
                return True
        return False

    def plan_motion(self, body: str, start: Pose, goal: Pose, state: EnvState,
                    rng: random.Random) -> tuple[list[Pose] | None, float]:
        """Straight-line sweep; on collision, up to three single-waypoint
        detours with uniformly drawn waypoints.  Returns (path, length)."""
        if not self.sweep_collides(body, start, goal, state):
            length = math.hypot(goal[0] - start[0], goal[1] - start[1])
            return [start, goal], length
        xmin, xmax, ymin, ymax = self.scene.workspace
        for _ in range(WAYPOINT_ATTEMPTS):
            wp = (rng.uniform(xmin, xmax), rng.uniform(ymin, ymax),
                  0.0 if self.scene.theta_mode == "axis" else rng.uniform(-math.pi, math.pi))
            if not self.sweep_collides(body, start, wp, state) and \
               not self.sweep_collides(body, wp, goal, state):
                length = math.hypot(wp[0] - start[0], wp[1] - start[1]) + \
                    math.hypot(goal[0] - wp[0], goal[1] - wp[1])
                return [start, wp, goal], length
        return None, 0.0

    def reachable(self, state: EnvState, body: str, pose: Pose) -> bool:
        """A pose is reachable iff no strictly taller body's footprint
        intersects the straight approach corridor from the front workspace
        edge (ymin) to the pose."""
        spec = self.scene.bodies[body]
        rank = HEIGHT_RANK.get(spec.height_class, 0)
        ymin = self.scene.workspace[2]
        length = pose[1] - ymin
        if length <= 0:
            return True
        corridor = (pose[0], (pose[1] + ymin) / 2.0, spec.w, length, 0.0)
        for other, opose in state.body_poses:
            if other == body:
                continue
            other_rank = HEIGHT_RANK.get(self.scene.bodies[other].height_class, 0)
            if other_rank <= rank:
                continue
            if rects_overlap(corridor, self.footprint(other, opose)):
                return False
        return True

    # -- streams shared by unpacking and kitchen
    def sample_stream(self, state, op, bindings, rng):
        iid = _instance_label(op)
        if op.name == "sample-pose":
            body, region = (a.name for a in op.args)
            pose = self.sample_region_pose(body, region, rng)
            if pose is None or self.pose_collides(
                body, pose, EnvState(), ignore=[]
            ):
                # static obstacles only; other bodies are checked at transition
                return StreamSample(iid, (), feasible=False)
            return StreamSample(iid, (pose,))
        if op.name == "plan-motion":
            body = op.args[0].name
            start = self.concrete_value(op.args[1], bindings)
            goal = self.concrete_value(op.args[2], bindings)
            moving_state = state.with_pose(body, start)
            path, length = self.plan_motion(body, start, goal, moving_state, rng)
            if path is None:
                return StreamSample(iid, (), feasible=False)
            width = self.scene.bodies[body].w
            return StreamSample(iid, (path,), cost_delta=length * width)
        raise DomainMismatchError(f"stream {op.name!r} unknown to backend {self.name!r}")


def _instance_label(op: GroundOperator) -> str:
    return op.name + ":" + ",".join(a.name for a in op.args)


class UnpackingBackend(TabletopBackend):
    name = "unpacking2d"

    def apply_transition(self, state, op, bindings):
        if op.name != "pick-place":
            raise DomainMismatchError(f"action {op.name!r} unknown to backend {self.name!r}")
        body = op.args[0].name
        target: Pose = self.concrete_value(op.args[4], bindings)
        if not self.reachable(state, body, state.pose(body)):
            return TransitionOutcome(state, False)
        if not self.reachable(state, body, target):
            return TransitionOutcome(state, False)
        if self.pose_collides(body, target, state):
            return TransitionOutcome(state, False)
        return TransitionOutcome(state.with_pose(body, target), True)


class KitchenBackend(TabletopBackend):
    """Mobile-manipulator kitchen: no approach-corridor constraint, but the
    stove is tight.  Placing on the sink marks a body cleaned; placing on
    the stove marks it cooked."""

    name = "kitchen2d"

    def apply_transition(self, state, op, bindings):
        if op.name not in ("wash", "cook"):
            raise DomainMismatchError(f"action {op.name!r} unknown to backend {self.name!r}")
        body = op.args[0].name
        target: Pose = self.concrete_value(op.args[4], bindings)
        if self.pose_collides(body, target, state):
            return TransitionOutcome(state, False)
        nxt = state.with_pose(body, target)
        nxt = nxt.with_flag("cleaned" if op.name == "wash" else "cooked", body)
        return TransitionOutcome(nxt, True)


class HanoiBackend(EnvironmentBackend):
    """Discretized Hanoi: pegs hold disc stacks; every move needs a grasp
    direction drawn from [-pi, pi] that must fall inside a narrow feasible
    band.  The band center is a deterministic function of (disc, from, to)
    and the instance seed, so a reused stream instance stays consistent."""

    name = "hanoi2d"

    def __init__(self, problem: Problem, instance_seed: int = 0,
                 band_width: float = math.radians(20.0)):
        self.band_width = band_width
        self.discs: list[str] = []
        self.pegs: list[str] = []
        for entry in problem.geometry:
            if entry[0] == "discs":
                self.discs = [str(x) for x in entry[1:]]
            elif entry[0] == "pegs":
                self.pegs = [str(x) for x in entry[1:]]
            elif entry[0] == "band-width-deg":
                self.band_width = math.radians(float(entry[1]))
        super().__init__(problem, instance_seed)

    def initial_state(self) -> EnvState:
        on = {}
        for l in self.problem.init.literals:
            if l.predicate == "on":
                on[l.args[0].name] = l.args[1].name
        stacks = {p: [] for p in self.pegs}
        for disc in reversed(self.discs):  # largest first
            support = on.get(disc)
            if support in stacks:
                stacks[support].append(disc)
            else:
                # supported by another disc; find its peg
                for peg, pile in stacks.items():
                    if support in pile:
                        pile.append(disc)
                        break
        aux = tuple((p, tuple(stacks[p])) for p in self.pegs)
        return EnvState(aux=aux)

    def band_center(self, disc: str, source: str, target: str) -> float:
        digest = hashlib.sha256(
            f"{self.instance_seed}|{disc}|{source}|{target}".encode()
        ).digest()
        frac = int.from_bytes(digest[:8], "big") / 2**64
        return -math.pi + 2 * math.pi * frac

    def sample_stream(self, state, op, bindings, rng):
        if op.name != "sample-grasp":
            raise DomainMismatchError(f"stream {op.name!r} unknown to backend {self.name!r}")
        disc, source, target = (a.name for a in op.args[:3])
        grasp = rng.uniform(-math.pi, math.pi)
        center = self.band_center(disc, source, target)
        if _angular_distance(grasp, center) > self.band_width / 2.0:
            return StreamSample(_instance_label(op), (), feasible=False)
        return StreamSample(_instance_label(op), (grasp,))

    def _peg_of(self, stacks, support: str) -> str:
        if support in self.pegs:
            return support
        for peg, pile in stacks:
            if support in pile:
                return peg
        raise BackendError(f"support {support!r} not found")

    def apply_transition(self, state, op, bindings):
        if op.name != "move":
            raise DomainMismatchError(f"action {op.name!r} unknown to backend {self.name!r}")
        disc, source, target = (a.name for a in op.args[:3])
        grasp = self.concrete_value_grasp(op.args[3], bindings)
        center = self.band_center(disc, source, target)
        if _angular_distance(grasp, center) > self.band_width / 2.0:
            return TransitionOutcome(state, False)
        stacks = {p: list(pile) for p, pile in state.aux}
        src_peg = self._peg_of(state.aux, source)
        dst_peg = self._peg_of(state.aux, target)
        if not stacks[src_peg] or stacks[src_peg][-1] != disc:
            return TransitionOutcome(state, False)
        stacks[src_peg].pop()
        stacks[dst_peg].append(disc)
        aux = tuple((p, tuple(stacks[p])) for p in self.pegs)
        # nominal motion effort, 0.1 m of lateral travel per peg of distance
        cost = 0.1 * abs(self.pegs.index(src_peg) - self.pegs.index(dst_peg))
        return TransitionOutcome(EnvState(aux=aux), True, cost)

    def concrete_value_grasp(self, obj: Obj, bindings: dict[Obj, Any]) -> float:
        if obj.optimistic:
            try:
                return bindings[obj]
            except KeyError:
                raise BackendError(f"unbound grasp {obj.name}")
        raise BackendError(f"grasp object {obj.name} has no concrete value")


BACKENDS: dict[str, type[EnvironmentBackend]] = {
    UnpackingBackend.name: UnpackingBackend,
    KitchenBackend.name: KitchenBackend,
    HanoiBackend.name: HanoiBackend,
}


def register_backend(cls: type[EnvironmentBackend]) -> type[EnvironmentBackend]:
    BACKENDS[cls.name] = cls
    return cls


def make_backend(problem: Problem, instance_seed: int = 0) -> EnvironmentBackend:
    try:
        cls = BACKENDS[problem.domain_backend]
    except KeyError:
        raise DomainMismatchError(f"no backend named {problem.domain_backend!r}")
    return cls(problem, instance_seed)
