"""Visual and tactile forward models, the prediction corrector, and FM data collection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sensor import (CameraModel, DegenerateDesignError, DegradationConfig, SensoryState, Segment,
                     degrade_observation, project_scene, state_to_text, states_from_text, wrap_x)
from .world import (COMMANDS, ActuationParams, MotorCommand, ObstacleDisk, Pose, WorldScene,
                    apply_motor, check_collision)

F, L, R = MotorCommand.FORWARD, MotorCommand.LEFT, MotorCommand.RIGHT


@dataclass(frozen=True)
class VisualFM:
    """Per-segment delta predictor.

    Rotations add a constant (dw, dx, dy); a forward step adds
    ``trig(2 pi x / W) * (a y^2 + b y)`` per component, with cos for w and y
    and sin for x.
    """
    rot_left: tuple[float, float, float] = (0.0, 60.0, 0.0)
    fwd: tuple[float, float, float, float, float, float] = (0.00501, -0.482, 0.00555, -0.473, 0.00123, -0.118)
    image_width: float = 1571.0
    provenance: str = "PaperCoefficients"
    residuals: dict = field(default_factory=dict)

    @property
    def rot_right(self) -> tuple[float, float, float]:
        return tuple(-v for v in self.rot_left)

    def delta(self, data: np.ndarray, cmd: MotorCommand) -> np.ndarray:
        """Deltas (dw, dx, dy) for an (n, >=3) array of (w, x, y, ...)."""
        n = len(data)
        if cmd is L:
            return np.broadcast_to(np.asarray(self.rot_left, dtype=float), (n, 3))
        if cmd is R:
            return np.broadcast_to(np.asarray(self.rot_right, dtype=float), (n, 3))
        aw, bw, ax, bx, ay, by = self.fwd
        phase = (2.0 * math.pi / self.image_width) * data[:, 1]
        y = data[:, 2]
        c, s = np.cos(phase), np.sin(phase)
        out = np.empty((n, 3))
        out[:, 0] = c * (aw * y + bw) * y
        out[:, 1] = s * (ax * y + bx) * y
        out[:, 2] = c * (ay * y + by) * y
        return out


PAPER_FM = VisualFM()


@dataclass(frozen=True)
class PredictionCorrector:
    inv_slope: float = 3.68
    inv_intercept: float = -318.2
    fwd_slope: float = 0.265
    fwd_intercept: float = 87.0
    enabled: bool = True

    def apply(self, w, y):
        w_alt = self.inv_slope * np.asarray(y) + self.inv_intercept
        w_corr = 0.5 * (np.asarray(w) + w_alt)
        return w_corr, self.fwd_slope * w_corr + self.fwd_intercept


PAPER_CORRECTOR = PredictionCorrector()


def correct_prediction(w_hat, y_hat, corrector: PredictionCorrector = PAPER_CORRECTOR):
    return corrector.apply(w_hat, y_hat)


def predict_array(fm: VisualFM, data: np.ndarray, cmd: MotorCommand,
                  corrector: PredictionCorrector | None = None) -> np.ndarray:
    """One FM step for every row of an (n, 4) (w, x, y, h) array."""
    out = data.copy()
    out[:, :3] += fm.delta(data, cmd)
    half = fm.image_width / 2.0
    x = out[:, 1]
    if np.any(x > half) or np.any(x <= -half):
        out[:, 1] = wrap_x(x, fm.image_width)
    if corrector is not None and corrector.enabled:
        out[:, 0], out[:, 2] = corrector.apply(out[:, 0], out[:, 2])
    return out


def fm_predict(fm: VisualFM, seg: Segment, cmd: MotorCommand,
               corrector: PredictionCorrector | None = None) -> Segment:
    dw, dx, dy = fm.delta(np.array([[seg.w, seg.x, seg.y]]), cmd)[0]
    w, y = seg.w + dw, seg.y + dy
    x = float(wrap_x(seg.x + dx, fm.image_width))
    if corrector is not None and corrector.enabled:
        w, y = corrector.apply(w, y)
    return Segment(seg.obstacle_id, float(w), x, float(y), seg.h)


def predict_state(fm: VisualFM, state: SensoryState, cmd: MotorCommand,
                  corrector: PredictionCorrector | None = None) -> SensoryState:
    return SensoryState(state.ids, predict_array(fm, state.data, cmd, corrector), state.step_index + 1)


@dataclass(frozen=True)
class TactileFM:
    collision_width_threshold: float = 215.0

    def __post_init__(self):
        if self.collision_width_threshold <= 0:
            raise ValueError("threshold must be positive")


def tactile_predict(tfm: TactileFM, state) -> bool:
    data = state.data if isinstance(state, SensoryState) else np.asarray(state)
    return bool(len(data)) and bool(np.any(data[:, 0] > tfm.collision_width_threshold))


def calibrate_tactile_threshold(camera: CameraModel, bumper_radius: float = 0.30,
                                obstacle_radius: float = 0.20) -> TactileFM:
    """Width of a standard obstacle whose surface touches the virtual bumper ring."""
    d = bumper_radius + obstacle_radius
    if bumper_radius <= 0 or d > camera.max_range:
        raise ValueError(f"bumper radius {bumper_radius} outside calibration range")
    scene = WorldScene((ObstacleDisk(0, (d, 0.0), obstacle_radius),), Pose(0.0, 0.0, 0.0),
                       extent=(d + obstacle_radius, obstacle_radius))
    state = project_scene(scene, Pose(0.0, 0.0, 0.0), camera)
    if len(state) == 0:
        raise ValueError("calibration obstacle not visible")
    return TactileFM(float(state.data[0, 0]))


# --- training data ---------------------------------------------------------

@dataclass(frozen=True)
class FMTrainingExample:
    segment: Segment
    command: MotorCommand
    target: tuple[float, float, float]


@dataclass(frozen=True)
class FMCollectConfig:
    n_sequences: int = 120
    mean_length: int = 55
    max_obstacles: int = 2
    distance_range: tuple[float, float] = (0.7, 3.5)
    command_probs: tuple[float, float, float] = (0.5, 0.25, 0.25)
    bumper_radius: float = 0.30
    noise: DegradationConfig = DegradationConfig(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass
class RecordedSequence:
    """Ground-truth observations along one executed command sequence."""
    observations: list
    commands: list


def _collection_scene(i: int, cfg: FMCollectConfig, rng: np.random.Generator):
    # distance and initial bearing swept systematically over the sequences
    k = cfg.n_sequences
    frac = (i + 0.5) / k
    d0 = cfg.distance_range[0] + frac * (cfg.distance_range[1] - cfg.distance_range[0])
    bearing = 2.0 * math.pi * ((i * 0.381966) % 1.0)
    n_obs = 1 + int(rng.integers(cfg.max_obstacles))
    span = 10.0
    obstacles = []
    for j in range(n_obs):
        for _ in range(50):
            dd = d0 if j == 0 else rng.uniform(*cfg.distance_range)
            bb = bearing if j == 0 else bearing + rng.uniform(-1.2, 1.2)
            c = (span / 2 + dd * math.cos(bb), span / 2 + dd * math.sin(bb))
            if all(math.dist(c, o.center) > 0.6 for o in obstacles):
                obstacles.append(ObstacleDisk(j, c))
                break
    start = Pose(span / 2, span / 2, rng.uniform(0, 2 * math.pi))
    return WorldScene(tuple(obstacles), start, extent=(span, span))


def record_sequences(camera: CameraModel, cfg: FMCollectConfig, rng: np.random.Generator,
                     actuation: ActuationParams = ActuationParams()) -> list[RecordedSequence]:
    """Random command walks around 1-2 obstacles; colliding moves are not executed."""
    seqs = []
    probs = np.asarray(cfg.command_probs, dtype=float)
    probs = probs / probs.sum()
    for i in range(cfg.n_sequences):
        scene = _collection_scene(i, cfg, rng)
        length = max(2, int(rng.integers(cfg.mean_length // 2, 3 * cfg.mean_length // 2 + 1)))
        pose = scene.robot_start
        obs = [degrade_observation(project_scene(scene, pose, camera), cfg.noise, rng, camera.image_width)]
        cmds = []
        while len(cmds) < length:
            cmd = COMMANDS[int(rng.choice(3, p=probs))]
            nxt = apply_motor(pose, cmd, actuation)
            if check_collision(nxt, scene, cfg.bumper_radius):
                # collision steps are excluded; try another command next time
                if all(check_collision(apply_motor(pose, c, actuation), scene, cfg.bumper_radius)
                       for c in COMMANDS):
                    break
                continue
            pose = nxt
            cmds.append(cmd)
            state = degrade_observation(project_scene(scene, pose, camera), cfg.noise, rng, camera.image_width)
            state.step_index = len(cmds)
            obs.append(state)
        seqs.append(RecordedSequence(obs, cmds))
    return seqs


def sequences_to_text(seqs) -> str:
    parts = []
    for k, seq in enumerate(seqs):
        parts.append(f"sequence {k} {''.join(c.value for c in seq.commands) or '-'}\n")
        parts.extend(state_to_text(obs) for obs in seq.observations)
    return "".join(parts)


def sequences_from_text(text: str) -> list[RecordedSequence]:
    seqs, chunk, cmds = [], [], None
    for raw in text.splitlines(keepends=True):
        if raw.startswith("sequence "):
            if cmds is not None:
                seqs.append(RecordedSequence(states_from_text("".join(chunk)), cmds))
            code = raw.split()[2]
            cmds, chunk = ([] if code == "-" else [MotorCommand(c) for c in code]), []
        else:
            chunk.append(raw)
    if cmds is not None:
        seqs.append(RecordedSequence(states_from_text("".join(chunk)), cmds))
    return seqs


def examples_from_sequences(seqs) -> list[FMTrainingExample]:
    out = []
    for seq in seqs:
        for t, cmd in enumerate(seq.commands):
            before, after = seq.observations[t].by_id(), seq.observations[t + 1].by_id()
            for oid, row in before.items():
                if oid not in after:
                    continue
                nxt = after[oid]
                dx = float(wrap_x(nxt[1] - row[1]))
                out.append(FMTrainingExample(Segment(oid, *map(float, row)), cmd,
                                             (float(nxt[0] - row[0]), dx, float(nxt[2] - row[2]))))
    return out


def collect_fm_dataset(camera: CameraModel, cfg: FMCollectConfig, rng: np.random.Generator,
                       actuation: ActuationParams = ActuationParams()) -> list[FMTrainingExample]:
    return examples_from_sequences(record_sequences(camera, cfg, rng, actuation))


def _example_arrays(dataset, cmd):
    rows = [(e.segment.w, e.segment.x, e.segment.y, e.segment.h) + tuple(e.target)
            for e in dataset if e.command is cmd]
    return np.asarray(rows, dtype=float).reshape(-1, 7)


def fit_visual_fm(dataset, image_width: float = 1571.0, min_per_command: int = 100) -> VisualFM:
    """Medians for the rotation deltas, linear least squares for the forward forms."""
    fwd = _example_arrays(dataset, F)
    left = _example_arrays(dataset, L)
    right = _example_arrays(dataset, R)
    for name, arr in (("forward", fwd), ("left", left), ("right", right)):
        if len(arr) < min_per_command:
            raise ValueError(f"need >= {min_per_command} {name} examples, got {len(arr)}")
    # pooled so that left and right stay exact inverses of each other
    rot = np.median(np.vstack([left[:, 4:7], -right[:, 4:7]]), axis=0)
    x, y = fwd[:, 1], fwd[:, 2]
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateDesignError("forward examples need varying x and y")
    phase = 2.0 * math.pi * x / image_width
    c, s = np.cos(phase), np.sin(phase)
    coefs, resid = [], {}
    for name, trig, target in (("w", c, fwd[:, 4]), ("x", s, fwd[:, 5]), ("y", c, fwd[:, 6])):
        design = np.column_stack([trig * y * y, trig * y])
        sol, *_ = np.linalg.lstsq(design, target, rcond=None)
        coefs.extend(float(v) for v in sol)
        resid[name] = float(np.sqrt(np.mean((target - design @ sol) ** 2)))
    rot_pred = np.vstack([left[:, 4:7] - rot, right[:, 4:7] + rot])
    resid["rot"] = float(np.sqrt(np.mean(rot_pred ** 2)))
    return VisualFM(tuple(float(v) for v in rot), tuple(coefs), float(image_width), "SyntheticFit", resid)


def fit_prediction_corrector(segments) -> PredictionCorrector:
    """Both regressions between w and y (y on w, and w on y) from observed segments."""
    arr = np.asarray([(s.w, s.y) for s in segments], dtype=float) if not isinstance(segments, np.ndarray) \
        else np.asarray(segments)[:, [0, 2]]
    w, y = arr[:, 0], arr[:, 1]
    one = np.ones_like(w)
    fs, fi = np.linalg.lstsq(np.column_stack([w, one]), y, rcond=None)[0]
    is_, ii = np.linalg.lstsq(np.column_stack([y, one]), w, rcond=None)[0]
    return PredictionCorrector(float(is_), float(ii), float(fs), float(fi), True)


@dataclass(frozen=True)
class FMErrorReport:
    x: float
    y: float
    w: float
    n: int


def evaluate_fm_iterative(fm: VisualFM, corrector: PredictionCorrector | None, sequences,
                          horizon: int = 50) -> FMErrorReport:
    """Feed the FM its own output for ``horizon`` steps; compare with the observation there."""
    errs = []
    for seq in sequences:
        if len(seq.commands) < horizon:
            continue
        start = seq.observations[0]
        data = start.data.copy()
        for cmd in seq.commands[:horizon]:
            data = predict_array(fm, data, cmd, corrector)
        truth = seq.observations[horizon].by_id()
        for oid, row in zip(start.ids, data):
            if int(oid) in truth:
                t = truth[int(oid)]
                errs.append((abs(float(wrap_x(row[1] - t[1], fm.image_width))),
                             abs(row[2] - t[2]), abs(row[0] - t[0])))
    if not errs:
        return FMErrorReport(0.0, 0.0, 0.0, 0)
    e = np.mean(np.asarray(errs), axis=0)
    return FMErrorReport(float(e[0]), float(e[1]), float(e[2]), len(errs))


def fm_to_text(fm: VisualFM, tactile: TactileFM, corrector: PredictionCorrector) -> str:
    aw, bw, ax, bx, ay, by = fm.fwd
    lines = [
        f"provenance {fm.provenance}",
        f"image_width {fm.image_width!r}",
        f"rot_dw {fm.rot_left[0]!r}", f"rot_dx {fm.rot_left[1]!r}", f"rot_dy {fm.rot_left[2]!r}",
        f"fwd_aw {aw!r}", f"fwd_bw {bw!r}", f"fwd_ax {ax!r}", f"fwd_bx {bx!r}",
        f"fwd_ay {ay!r}", f"fwd_by {by!r}",
        f"tactile_threshold {tactile.collision_width_threshold!r}",
        f"corr_inv_slope {corrector.inv_slope!r}", f"corr_inv_intercept {corrector.inv_intercept!r}",
        f"corr_fwd_slope {corrector.fwd_slope!r}", f"corr_fwd_intercept {corrector.fwd_intercept!r}",
    ]
    lines += [f"resid_{k} {v!r}" for k, v in sorted(fm.residuals.items())]
    return "\n".join(lines) + "\n"


def fm_from_text(text: str):
    kv = {}
    for raw in text.splitlines():
        parts = raw.split()
        if len(parts) == 2:
            kv[parts[0]] = parts[1]
    num = lambda k: float(kv[k])  # noqa: E731
    fm = VisualFM((num("rot_dw"), num("rot_dx"), num("rot_dy")),
                  tuple(num(k) for k in ("fwd_aw", "fwd_bw", "fwd_ax", "fwd_bx", "fwd_ay", "fwd_by")),
                  num("image_width"), kv.get("provenance", "SyntheticFit"),
                  {k[6:]: float(v) for k, v in kv.items() if k.startswith("resid_")})
    tactile = TactileFM(num("tactile_threshold"))
    corrector = PredictionCorrector(num("corr_inv_slope"), num("corr_inv_intercept"),
                                    num("corr_fwd_slope"), num("corr_fwd_intercept"))
    return fm, tactile, corrector
