"""Ground-truth 2D world: robot pose, disk obstacles and scene generation.

World frame: x to the right, y up, headings counterclockwise from +x.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

TWO_PI = 2.0 * math.pi


class SceneGenerationError(RuntimeError):
    pass


class MotorCommand(Enum):
    FORWARD = "F"
    LEFT = "L"
    RIGHT = "R"

    @property
    def is_turn(self) -> bool:
        return self is not MotorCommand.FORWARD

    def opposite(self) -> "MotorCommand":
        if self is MotorCommand.LEFT:
            return MotorCommand.RIGHT
        if self is MotorCommand.RIGHT:
            return MotorCommand.LEFT
        return self

    @classmethod
    def parse(cls, text: str) -> "MotorCommand":
        key = text.strip().upper()[:1]
        return cls(key)


# Canonical order, also the tie-break order (Forward < Left < Right).
COMMANDS = (MotorCommand.FORWARD, MotorCommand.LEFT, MotorCommand.RIGHT)


def normalize_angle(theta: float) -> float:
    theta = math.fmod(theta, TWO_PI)
    if theta < 0.0:
        theta += TWO_PI
    # fmod of values a hair below 2*pi can round up to exactly 2*pi
    return 0.0 if theta >= TWO_PI else theta


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(float(self.heading)))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class ObstacleDisk:
    id: int
    center: tuple[float, float]
    radius: float = 0.20
    height: float = 0.30
    color_tag: str = "yellow"

    def __post_init__(self):
        if self.radius <= 0 or self.height <= 0:
            raise ValueError(f"obstacle {self.id}: radius and height must be positive")
        if self.color_tag not in ("yellow", "green", "red"):
            raise ValueError(f"obstacle {self.id}: unknown color {self.color_tag!r}")


@dataclass(frozen=True)
class WorldScene:
    obstacles: tuple[ObstacleDisk, ...]
    robot_start: Pose
    label: str = "Unlabeled"
    extent: tuple[float, float] = (3.0, 4.0)

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.label not in ("DeadEnd", "Corridor", "Unlabeled"):
            raise ValueError(f"unknown scene label {self.label!r}")
        ids = [ob.id for ob in self.obstacles]
        if len(set(ids)) != len(ids):
            raise ValueError("obstacle ids must be unique")
        ex, ey = self.extent
        for ob in self.obstacles:
            cx, cy = ob.center
            if not (0.0 <= cx <= ex and 0.0 <= cy <= ey):
                raise ValueError(f"obstacle {ob.id} center {ob.center} outside extent {self.extent}")
        for i, a in enumerate(self.obstacles):
            for b in self.obstacles[i + 1:]:
                if math.dist(a.center, b.center) <= a.radius + b.radius:
                    raise ValueError(f"obstacles {a.id} and {b.id} overlap")

    def centers(self) -> np.ndarray:
        return np.array([ob.center for ob in self.obstacles], dtype=float).reshape(-1, 2)

    def radii(self) -> np.ndarray:
        return np.array([ob.radius for ob in self.obstacles], dtype=float)


@dataclass(frozen=True)
class ActuationParams:
    forward_step: float = 0.10
    # 60 px of a 1571 px panorama, the rotation actually measured on the robot
    turn_angle: float = TWO_PI * 60.0 / 1571.0

    def __post_init__(self):
        if self.forward_step <= 0:
            raise ValueError("forward_step must be positive")
        if not 0.0 < self.turn_angle < math.pi / 2:
            raise ValueError("turn_angle must lie in (0, pi/2)")


def apply_motor(pose: Pose, cmd: MotorCommand, params: ActuationParams = ActuationParams()) -> Pose:
    if cmd is MotorCommand.FORWARD:
        return Pose(pose.x + params.forward_step * math.cos(pose.heading),
                    pose.y + params.forward_step * math.sin(pose.heading),
                    pose.heading)
    if cmd is MotorCommand.LEFT:
        return Pose(pose.x, pose.y, pose.heading + params.turn_angle)
    return Pose(pose.x, pose.y, pose.heading - params.turn_angle)


def integrate_commands(start: Pose, commands, params: ActuationParams = ActuationParams()) -> list[Pose]:
    """Poses visited by executing ``commands`` from ``start`` (start included)."""
    poses = [start]
    for cmd in commands:
        poses.append(apply_motor(poses[-1], cmd, params))
    return poses


def clearance(pose: Pose, scene: WorldScene, bumper_radius: float = 0.30) -> float:
    """Smallest (center distance - obstacle radius - bumper) over the scene; inf if empty."""
    if not scene.obstacles:
        return math.inf
    d = np.hypot(scene.centers()[:, 0] - pose.x, scene.centers()[:, 1] - pose.y)
    return float(np.min(d - scene.radii() - bumper_radius))


def check_collision(pose: Pose, scene: WorldScene, bumper_radius: float = 0.30) -> bool:
    if bumper_radius <= 0:
        raise ValueError("bumper_radius must be positive")
    return clearance(pose, scene, bumper_radius) < 0.0


def gap_statistics(scene: WorldScene) -> list[tuple[tuple[int, int], float]]:
    """Surface gaps between neighbours along the arrangement chain.

    Obstacles are taken in id order, which is the order in which the
    generator lays them out along the wall chain.
    """
    if len(scene.obstacles) < 2:
        raise ValueError("gap statistics need at least two obstacles")
    chain = sorted(scene.obstacles, key=lambda ob: ob.id)
    out = []
    for a, b in zip(chain[:-1], chain[1:]):
        gap = math.dist(a.center, b.center) - a.radius - b.radius
        if gap <= 0:
            raise ValueError(f"obstacles {a.id} and {b.id} overlap")
        out.append(((a.id, b.id), gap))
    return out


@dataclass(frozen=True)
class SceneGenConfig:
    n_obstacles: int = 10
    extent: tuple[float, float] = (3.0, 4.0)
    radius: float = 0.20
    height: float = 0.30
    dead_end_max_gap: float = 0.55
    dead_end_min_gap: float = 0.25
    corridor_gap: tuple[float, float] = (0.85, 1.10)
    n_corridor_gaps: int = 1
    # centre-line width of the U between its two side walls
    back_width: tuple[float, float] = (1.8, 2.4)
    min_depth: float = 1.6
    mouth_y: float = 1.0
    # measured outward from the mouth line; negative values start inside the arms
    start_distance: tuple[float, float] = (-0.5, 0.0)
    start_lateral: float = 0.15
    heading_jitter_deg: float = 15.0
    position_jitter: float = 0.03
    max_retries: int = 500


def _u_chain(arc: np.ndarray, cx: float, mouth_y: float, width: float, depth: float) -> np.ndarray:
    """Map arc-length positions onto the U polyline (left wall up, back wall, right wall down)."""
    pts = np.empty((len(arc), 2))
    for i, s in enumerate(arc):
        if s <= depth:
            pts[i] = (cx - width / 2, mouth_y + s)
        elif s <= depth + width:
            pts[i] = (cx - width / 2 + (s - depth), mouth_y + depth)
        else:
            pts[i] = (cx + width / 2, mouth_y + depth - (s - depth - width))
    return pts


def generate_scene(kind: str, seed, params: SceneGenConfig = SceneGenConfig()) -> WorldScene:
    """Lay out a U-shaped arrangement; corridors get widened gaps in the back wall.

    Raises SceneGenerationError when no layout satisfying the gap bounds
    and extent is found within ``params.max_retries`` attempts.
    """
    if kind not in ("DeadEnd", "Corridor"):
        raise ValueError(f"kind must be DeadEnd or Corridor, got {kind!r}")
    rng = np.random.default_rng(seed)
    p = params
    n = p.n_obstacles
    ex, ey = p.extent
    cx = ex / 2.0
    r = p.radius
    colors = ("yellow", "green", "red")
    for _ in range(p.max_retries):
        gaps = rng.uniform(p.dead_end_min_gap, p.dead_end_max_gap, size=n - 1)
        width = rng.uniform(*p.back_width)
        wide: list[int] = []
        if kind == "Corridor":
            # widen gaps whose midpoint falls on the back wall
            spacing = gaps + 2 * r
            arc = np.concatenate([[0.0], np.cumsum(spacing)])
            depth = (arc[-1] - width) / 2
            mids = (arc[:-1] + arc[1:]) / 2
            on_back = np.flatnonzero((mids > depth + 0.3) & (mids < depth + width - 0.3))
            if len(on_back) < p.n_corridor_gaps:
                continue
            wide = sorted(rng.choice(on_back, size=p.n_corridor_gaps, replace=False).tolist())
            gaps[wide] = rng.uniform(*p.corridor_gap, size=len(wide))
        spacing = gaps + 2 * r
        arc = np.concatenate([[0.0], np.cumsum(spacing)])
        depth = (arc[-1] - width) / 2
        if depth < p.min_depth:
            continue
        pts = _u_chain(arc, cx, p.mouth_y, width, depth)
        pts = pts + rng.uniform(-p.position_jitter, p.position_jitter, size=pts.shape)
        if np.any(pts < r) or np.any(pts[:, 0] > ex - r) or np.any(pts[:, 1] > ey - r):
            continue
        obstacles = tuple(
            ObstacleDisk(i, (float(px), float(py)), r, p.height, colors[int(rng.integers(3))])
            for i, (px, py) in enumerate(pts))
        # re-check gap bounds after jitter
        surf = np.hypot(*(pts[1:] - pts[:-1]).T) - 2 * r
        ok = True
        for i, g in enumerate(surf):
            if i in wide:
                ok &= p.corridor_gap[0] <= g <= p.corridor_gap[1]
            else:
                ok &= 0.0 < g <= p.dead_end_max_gap
        if not ok:
            continue
        # non-neighbours must not overlap either (corners fold the chain)
        d_all = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
        np.fill_diagonal(d_all, np.inf)
        if np.any(d_all <= 2 * r):
            continue
        sx = cx + rng.uniform(-p.start_lateral, p.start_lateral)
        sy = p.mouth_y - rng.uniform(*p.start_distance)
        if sy < 0.0:
            continue
        centroid = pts.mean(axis=0)
        heading = math.atan2(centroid[1] - sy, centroid[0] - sx)
        heading += math.radians(rng.uniform(-p.heading_jitter_deg, p.heading_jitter_deg))
        return WorldScene(obstacles, Pose(sx, sy, heading), kind, p.extent)
    raise SceneGenerationError(f"no {kind} layout found in {p.max_retries} attempts")


def scene_to_text(scene: WorldScene) -> str:
    num = lambda *vals: " ".join(repr(float(v)) for v in vals)  # noqa: E731
    s = scene.robot_start
    lines = [f"scene {scene.label} {num(*scene.extent)}", f"robot {num(s.x, s.y, s.heading)}"]
    for ob in scene.obstacles:
        lines.append(f"obs {ob.id} {num(ob.center[0], ob.center[1], ob.radius, ob.height)} {ob.color_tag}")
    return "\n".join(lines) + "\n"


def scene_from_text(text: str) -> WorldScene:
    label, extent, robot, obstacles = "Unlabeled", (3.0, 4.0), Pose(0.0, 0.0, 0.0), []
    for raw in text.splitlines():
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "scene":
            label, extent = parts[1], (float(parts[2]), float(parts[3]))
        elif parts[0] == "robot":
            robot = Pose(float(parts[1]), float(parts[2]), float(parts[3]))
        elif parts[0] == "obs":
            obstacles.append(ObstacleDisk(int(parts[1]), (float(parts[2]), float(parts[3])),
                                          float(parts[4]), float(parts[5]), parts[6]))
        else:
            raise ValueError(f"unrecognised scene line: {raw!r}")
    return WorldScene(tuple(obstacles), robot, label, extent)
