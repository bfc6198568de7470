"""Synthetic panoramic camera producing per-obstacle segment features.

Rows follow a ground-plane catadioptric model, ``row = horizon + scale * (cam_h - z) / d``;
columns are azimuth, with ``x`` the signed offset from the forward
direction (positive to the right, so a left turn shifts segments to
larger ``x``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .world import TWO_PI, Pose, WorldScene


class DegenerateDesignError(ValueError):
    pass


@dataclass(frozen=True)
class CameraModel:
    image_width: int = 1571
    image_height: int = 214
    horizon_row: float = 87.0
    row_scale: float = 92.0          # px * m
    camera_height: float = 0.60      # m above ground
    width_gain: float = 1.045        # magnification of the azimuthal subtense
    chassis_occlusion_row: float = 183.0
    min_segment_area: float = 150.0
    max_range: float = 4.5

    def __post_init__(self):
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.row_scale <= 0 or self.camera_height <= 0:
            raise ValueError("projection must be monotone (row_scale, camera_height > 0)")

    @property
    def px_per_rad(self) -> float:
        return self.image_width / TWO_PI

    def row_of(self, distance, z):
        return self.horizon_row + self.row_scale * (self.camera_height - z) / np.asarray(distance)

    def width_of(self, distance, radius):
        ratio = np.clip(radius / np.asarray(distance), -1.0, 1.0)
        return 2.0 * np.arcsin(ratio) * self.px_per_rad * self.width_gain


def wrap_x(x, image_width: float = 1571.0):
    """Wrap horizontal offsets onto (-W/2, W/2]."""
    half = image_width / 2.0
    return half - np.mod(half - np.asarray(x, dtype=float), image_width)


@dataclass(frozen=True)
class Segment:
    obstacle_id: int
    w: float
    x: float
    y: float
    h: float = 0.0


class SensoryState:
    """Segments of one observation, stored as an (n, 4) array of (w, x, y, h)."""

    __slots__ = ("ids", "data", "step_index")

    def __init__(self, ids, data, step_index: int = 0):
        ids = np.asarray(ids, dtype=int).reshape(-1)
        data = np.asarray(data, dtype=float).reshape(-1, 4)
        if len(ids) != len(data):
            raise ValueError("ids and data disagree in length")
        if len(set(ids.tolist())) != len(ids):
            raise ValueError("segment ids must be unique")
        self.ids = ids
        self.data = data
        self.step_index = step_index

    @classmethod
    def from_segments(cls, segments, step_index: int = 0) -> "SensoryState":
        segments = list(segments)
        return cls([s.obstacle_id for s in segments],
                   [(s.w, s.x, s.y, s.h) for s in segments], step_index)

    @property
    def segments(self) -> list[Segment]:
        return [Segment(int(i), *map(float, row)) for i, row in zip(self.ids, self.data)]

    def __len__(self):
        return len(self.ids)

    def __eq__(self, other):
        return (isinstance(other, SensoryState) and np.array_equal(self.ids, other.ids)
                and np.array_equal(self.data, other.data) and self.step_index == other.step_index)

    def __repr__(self):
        return f"SensoryState(t={self.step_index}, segments={self.segments})"

    def with_data(self, data, step_index: int | None = None) -> "SensoryState":
        return SensoryState(self.ids, data, self.step_index if step_index is None else step_index)

    def by_id(self) -> dict[int, np.ndarray]:
        return {int(i): row for i, row in zip(self.ids, self.data)}


def _subtract_intervals(lo: float, hi: float, blockers: list[tuple[float, float]]) -> list[tuple[float, float]]:
    pieces = [(lo, hi)]
    for b_lo, b_hi in blockers:
        nxt = []
        for p_lo, p_hi in pieces:
            if b_hi <= p_lo or b_lo >= p_hi:
                nxt.append((p_lo, p_hi))
                continue
            if b_lo > p_lo:
                nxt.append((p_lo, b_lo))
            if b_hi < p_hi:
                nxt.append((b_hi, p_hi))
        pieces = nxt
    return pieces


def _unwrap_near(value: float, ref: float, width: float) -> float:
    return ref + float(wrap_x(value - ref, width))


def project_scene(scene: WorldScene, robot: Pose, camera: CameraModel = CameraModel()) -> SensoryState:
    obs = [ob for ob in scene.obstacles]
    if not obs:
        return SensoryState([], np.zeros((0, 4)))
    W = camera.image_width
    cands = []
    for ob in obs:
        dx, dy = ob.center[0] - robot.x, ob.center[1] - robot.y
        d = math.hypot(dx, dy)
        if d > camera.max_range or d <= ob.radius:
            continue
        bearing_right = robot.heading - math.atan2(dy, dx)
        x = float(wrap_x(bearing_right * camera.px_per_rad, W))
        w = float(camera.width_of(d, ob.radius))
        y_top = float(camera.row_of(d, ob.height))
        y_bottom = min(float(camera.row_of(d, 0.0)), camera.chassis_occlusion_row, camera.image_height)
        if y_top >= y_bottom:
            continue
        cands.append((d, ob.id, w, x, y_top, y_bottom - y_top))
    cands.sort()
    # nearer segments hide the lower part of farther ones; the strip above
    # the nearer top edge keeps the full width visible
    kept = []
    placed: list[tuple[float, float, float]] = []   # (x, w, y_top) of nearer segments
    for d, oid, w, x, y, h in cands:
        blockers = []
        strip = h
        for px, pw, py in placed:
            cx = _unwrap_near(px, x, W)
            if abs(cx - x) < (pw + w) / 2:
                blockers.append((cx - pw / 2, cx + pw / 2))
                strip = min(strip, max(py - y, 0.0))
        pieces = _subtract_intervals(x - w / 2, x + w / 2, blockers)
        chord = sum(hi - lo for lo, hi in pieces)
        area = w * strip + chord * (h - strip)
        placed.append((x, w, y))
        if area < camera.min_segment_area:
            continue
        kept.append((oid, w, x, y, h))
    kept.sort()
    return SensoryState([k[0] for k in kept], [k[1:] for k in kept])


@dataclass(frozen=True)
class DegradationConfig:
    sigma_w: float = 1.0
    sigma_x: float = 1.0
    sigma_y: float = 0.5
    sigma_h: float = 0.5
    # strips of the rear obstacle thinner than this (px) are lost in segmentation
    strip_threshold: float = 2.0


def visible_chord(state: SensoryState, index: int, image_width: float = 1571.0):
    """Largest piece of segment ``index`` not hidden behind nearer (lower-lying) segments.

    Returns (lo, hi, strip) in unwrapped pixel columns around the segment's
    own x, where strip is the thinnest row band left above an occluder.
    """
    w, x, y, h = state.data[index]
    blockers, strip = [], math.inf
    for j, (ow, ox, oy, oh) in enumerate(state.data):
        if j == index or oy <= y:
            continue
        cx = _unwrap_near(ox, x, image_width)
        if abs(cx - x) < (ow + w) / 2:
            blockers.append((cx - ow / 2, cx + ow / 2))
            strip = min(strip, oy - y)
    pieces = _subtract_intervals(x - w / 2, x + w / 2, blockers)
    if not pieces:
        return None, None, strip
    lo, hi = max(pieces, key=lambda p: p[1] - p[0])
    return lo, hi, strip


def degrade_observation(state: SensoryState, noise: DegradationConfig, rng: np.random.Generator,
                        image_width: float = 1571.0) -> SensoryState:
    data = state.data.copy()
    keep = np.ones(len(data), dtype=bool)
    for i in range(len(data)):
        lo, hi, strip = visible_chord(state, i, image_width)
        if strip >= noise.strip_threshold:
            continue
        if lo is None or hi - lo <= 0:
            keep[i] = False
            continue
        if hi - lo < data[i, 0]:
            data[i, 0] = hi - lo
            data[i, 1] = float(wrap_x((lo + hi) / 2, image_width))
    sig = np.array([noise.sigma_w, noise.sigma_x, noise.sigma_y, noise.sigma_h])
    if np.any(sig > 0):
        data = data + rng.normal(size=data.shape) * sig
        data[:, 1] = wrap_x(data[:, 1], image_width)
        data[:, 0] = np.maximum(data[:, 0], 1e-3)
        data[:, 3] = np.maximum(data[:, 3], 0.0)
    return SensoryState(state.ids[keep], data[keep], state.step_index)


@dataclass(frozen=True)
class CorrectionModel:
    y_split: float = 135.0
    far: tuple[float, float, float] = (2.12, 1.35, -197.6)      # (a_y, a_h, a_0), y <= split
    near: tuple[float, float, float] = (3.53, -0.039, -291.4)   # y > split
    line_slope: float = 0.265
    line_intercept: float = 87.0
    r2: dict = field(default_factory=lambda: {"far": 0.97, "near": 0.80, "line": 0.98})

    def __post_init__(self):
        if self.line_slope <= 0:
            raise ValueError("w-y line slope must be positive")

    def estimate_width(self, y, h):
        y = np.asarray(y, dtype=float)
        h = np.asarray(h, dtype=float)
        far = self.far[0] * y + self.far[1] * h + self.far[2]
        near = self.near[0] * y + self.near[1] * h + self.near[2]
        return np.where(y <= self.y_split, far, near)


PAPER_CORRECTION = CorrectionModel()


def _ols(design: np.ndarray, target: np.ndarray):
    for j in range(design.shape[1]):
        col = design[:, j]
        if np.all(col == col[0]) and not np.all(col == 1.0):
            raise DegenerateDesignError(f"regressor {j} is constant")
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ coef
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return coef, r2


def fit_correction_model(dataset, y_split: float = 135.0, min_per_side: int = 50) -> CorrectionModel:
    """Least-squares fit of the width estimators (per y side) and the w->y line.

    ``dataset`` is an iterable of Segments or an (n, >=4) array of (w, x, y, h).
    """
    arr = _as_feature_array(dataset)
    w, y, h = arr[:, 0], arr[:, 2], arr[:, 3]
    far = y <= y_split
    if far.sum() < min_per_side or (~far).sum() < min_per_side:
        raise ValueError(f"need >= {min_per_side} points on each side of y = {y_split}")
    coefs, r2 = {}, {}
    for name, mask in (("far", far), ("near", ~far)):
        design = np.column_stack([y[mask], h[mask], np.ones(mask.sum())])
        coef, r2[name] = _ols(design, w[mask])
        coefs[name] = tuple(float(c) for c in coef)
    line, r2["line"] = _ols(np.column_stack([w, np.ones_like(w)]), y)
    return CorrectionModel(y_split, coefs["far"], coefs["near"], float(line[0]), float(line[1]), r2)


def correction_to_text(model: CorrectionModel) -> str:
    lines = [f"y_split {model.y_split!r}",
             "far " + " ".join(repr(v) for v in model.far),
             "near " + " ".join(repr(v) for v in model.near),
             f"line {model.line_slope!r} {model.line_intercept!r}"]
    lines += [f"r2_{k} {v!r}" for k, v in sorted(model.r2.items())]
    return "\n".join(lines) + "\n"


def correction_from_text(text: str) -> CorrectionModel:
    kv = {}
    for raw in text.splitlines():
        parts = raw.split()
        if parts:
            kv[parts[0]] = [float(v) for v in parts[1:]]
    return CorrectionModel(kv["y_split"][0], tuple(kv["far"]), tuple(kv["near"]), kv["line"][0], kv["line"][1],
                           {k[3:]: v[0] for k, v in kv.items() if k.startswith("r2_")})


def _as_feature_array(dataset) -> np.ndarray:
    if isinstance(dataset, np.ndarray):
        return np.asarray(dataset, dtype=float)
    rows = [(s.w, s.x, s.y, s.h) for s in dataset]
    return np.asarray(rows, dtype=float).reshape(-1, 4)


def correct_initial_state(state: SensoryState, model: CorrectionModel) -> SensoryState:
    data = state.data.copy()
    w_hat = model.estimate_width(data[:, 2], data[:, 3])
    data[:, 0] = 0.5 * (data[:, 0] + w_hat)
    data[:, 2] = model.line_slope * data[:, 0] + model.line_intercept
    return state.with_data(data)


@dataclass(frozen=True)
class WidthDistanceCalibration:
    """Monotone width -> ground distance lookup built from a projection sweep."""
    widths: tuple[float, ...]
    distances: tuple[float, ...]

    def distance(self, w):
        # widths decrease with distance; np.interp needs increasing abscissae
        return np.interp(w, self.widths[::-1], self.distances[::-1])


def calibrate_width_distance(camera: CameraModel = CameraModel(), radius: float = 0.20,
                             n: int = 200) -> WidthDistanceCalibration:
    d = np.linspace(radius + 0.05, camera.max_range, n)
    w = camera.width_of(d, radius)
    return WidthDistanceCalibration(tuple(map(float, w)), tuple(map(float, d)))


def state_to_text(state: SensoryState) -> str:
    lines = [f"obs_state {state.step_index}"]
    for i, row in zip(state.ids, state.data.tolist()):
        lines.append(f"seg {int(i)} " + " ".join(repr(v) for v in row))
    return "\n".join(lines) + "\n"


def states_from_text(text: str) -> list[SensoryState]:
    states, ids, rows, t = [], [], [], None
    for raw in text.splitlines():
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "obs_state":
            if t is not None:
                states.append(SensoryState(ids, rows, t))
            ids, rows, t = [], [], int(parts[1])
        elif parts[0] == "seg":
            ids.append(int(parts[1]))
            rows.append([float(v) for v in parts[2:6]])
    if t is not None:
        states.append(SensoryState(ids, rows, t))
    return states


def sweep_distances(camera: CameraModel, distances, radius: float = 0.20, height: float = 0.30) -> np.ndarray:
    """(w, y, h) of a lone obstacle straight ahead at each centre distance."""
    d = np.asarray(distances, dtype=float)
    w = camera.width_of(d, radius)
    y = camera.row_of(d, height)
    bottom = np.minimum(np.minimum(camera.row_of(d, 0.0), camera.chassis_occlusion_row), camera.image_height)
    return np.column_stack([w, y, bottom - y])


__all__ = [
    "CameraModel", "Segment", "SensoryState", "DegradationConfig", "CorrectionModel",
    "DegenerateDesignError", "PAPER_CORRECTION", "project_scene", "degrade_observation",
    "fit_correction_model", "correct_initial_state", "wrap_x", "visible_chord",
    "WidthDistanceCalibration", "calibrate_width_distance", "state_to_text",
    "states_from_text", "sweep_distances", "correction_to_text", "correction_from_text",
]
