"""Inverse model: blob images, pairwise PLS regression modules and action selection."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .forward_models import PredictionCorrector, TactileFM, VisualFM, predict_array
from .pls import pls_fit
from .sensor import CameraModel, DegradationConfig, SensoryState, degrade_observation, project_scene
from .world import (COMMANDS, ActuationParams, MotorCommand, Pose, WorldScene, apply_motor,
                    check_collision)

F, L, R = MotorCommand.FORWARD, MotorCommand.LEFT, MotorCommand.RIGHT

BLOB_W, BLOB_H = 197, 42
BLOB_DIM = BLOB_W * BLOB_H
PAIRS = ((F, L), (F, R), (L, R))


class IMVariant(Enum):
    DET = "det"
    PROB = "prob"
    RANDOM = "random"


# --- blob images -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BlobImage:
    pixels: np.ndarray   # (42, 197) bool

    @property
    def vector(self) -> np.ndarray:
        return self.pixels.reshape(-1)


def render_blob_array(data: np.ndarray, image_width: float = 1571.0, image_height: float = 214.0) -> np.ndarray:
    """Binary image with one filled disk per segment, wrapping horizontally.

    Disk centre column is the image centre plus the scaled offset x, centre
    row the scaled y, radius half the scaled width. Each covered row is
    filled as a column interval through a difference array.
    """
    data = np.asarray(data, dtype=float).reshape(-1, 4)
    sx = BLOB_W / image_width
    sy = BLOB_H / image_height
    r = 0.5 * data[:, 0] * sx
    cc = BLOB_W // 2 + data[:, 1] * sx
    cr = data[:, 2] * sy
    r0 = np.maximum(0, np.ceil(cr - r)).astype(int)
    r1 = np.minimum(BLOB_H - 1, np.floor(cr + r)).astype(int)
    counts = np.where(r > 0, np.maximum(r1 - r0 + 1, 0), 0)
    total = int(counts.sum())
    if total == 0:
        return np.zeros((BLOB_H, BLOB_W), dtype=bool)
    disk = np.repeat(np.arange(len(r)), counts)
    starts = np.cumsum(counts) - counts
    rows = r0[disk] + np.arange(total) - starts[disk]
    half2 = r[disk] ** 2 - (rows - cr[disk]) ** 2
    ok = half2 >= 0
    rows, disk, half = rows[ok], disk[ok], np.sqrt(half2[ok])
    lo = np.ceil(cc[disk] - half).astype(int)
    hi = np.floor(cc[disk] + half).astype(int)
    ok = lo <= hi
    rows, lo, hi = rows[ok], lo[ok], hi[ok]
    start = np.mod(lo, BLOB_W)
    end = start + np.minimum(hi - lo + 1, BLOB_W)
    stride = BLOB_W + 1
    idx = [rows * stride + start, rows * stride + np.minimum(end, BLOB_W)]
    wt = [np.ones(len(rows)), -np.ones(len(rows))]
    wrapped = end > BLOB_W
    if wrapped.any():
        wr = rows[wrapped]
        idx += [wr * stride, wr * stride + end[wrapped] - BLOB_W]
        wt += [np.ones(len(wr)), -np.ones(len(wr))]
    diff = np.bincount(np.concatenate(idx), np.concatenate(wt), minlength=BLOB_H * stride)
    return np.cumsum(diff.reshape(BLOB_H, stride)[:, :BLOB_W], axis=1) > 0.5


def render_blob_image(state: SensoryState, image_width: float = 1571.0, image_height: float = 214.0) -> BlobImage:
    return BlobImage(render_blob_array(state.data, image_width, image_height))


# --- regression modules ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class RegressionModule:
    pair: tuple[MotorCommand, MotorCommand]
    mean: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.beta.shape:
            raise ValueError("mean and beta must have equal length")


def im_regression_q(module: RegressionModule, blob) -> float:
    x = blob.vector if isinstance(blob, BlobImage) else np.asarray(blob).reshape(-1)
    return 0.5 + float(module.beta @ (x - module.mean))


@dataclass(frozen=True, eq=False)
class InverseModel:
    modules: tuple[RegressionModule, RegressionModule, RegressionModule]
    variant: IMVariant = IMVariant.DET
    random_probs: tuple[float, float, float] = (2 / 3, 1 / 6, 1 / 6)
    n_components: int = 8

    def __post_init__(self):
        if tuple(m.pair for m in self.modules) != PAIRS:
            raise ValueError("modules must be (F,L), (F,R), (L,R)")
        if abs(sum(self.random_probs) - 1.0) > 1e-9:
            raise ValueError("random-walk probabilities must sum to 1")
        B = np.vstack([m.beta for m in self.modules])
        off = np.array([0.5 - float(m.beta @ m.mean) for m in self.modules])
        object.__setattr__(self, "_B", B)
        object.__setattr__(self, "_off", off)
        object.__setattr__(self, "_cum", np.cumsum(self.random_probs))

    def with_variant(self, variant: IMVariant) -> "InverseModel":
        return replace(self, variant=variant)

    def canonical_q(self, blob) -> np.ndarray:
        """(q(F,L), q(F,R), q(L,R)) for a blob image or flat pixel vector."""
        x = blob.vector if isinstance(blob, BlobImage) else np.asarray(blob).reshape(-1)
        return self._off + self._B @ x.astype(float, copy=False)


def goodness_from_q(q) -> tuple[float, float, float]:
    q_fl, q_fr, q_lr = q
    return (min(q_fl, q_fr), min(1.0 - q_fl, q_lr), min(1.0 - q_fr, 1.0 - q_lr))


def im_goodness(im: InverseModel, blob) -> tuple[float, float, float]:
    return goodness_from_q(im.canonical_q(blob))


def prob_from_q(q) -> np.ndarray:
    q_fl, q_fr, q_lr = np.clip(np.asarray(q, dtype=float), 0.0, 1.0)
    p = np.array([q_fl * q_fr, (1.0 - q_fl) * q_lr, (1.0 - q_fr) * (1.0 - q_lr)])
    total = p.sum()
    if total <= 0.0:
        return np.full(3, 1.0 / 3.0)
    return p / total


def _sample(cum: np.ndarray, rng: np.random.Generator) -> MotorCommand:
    u = rng.random() * cum[-1]
    for i, c in enumerate(cum):
        if u < c:
            return COMMANDS[i]
    return COMMANDS[-1]


def decide_from_q(variant: IMVariant, q, rng: np.random.Generator | None,
                  random_cum=np.cumsum((2 / 3, 1 / 6, 1 / 6))) -> MotorCommand:
    if variant is IMVariant.DET:
        g = goodness_from_q(q)
        best = 0
        for i in (1, 2):
            if g[i] > g[best]:
                best = i
        return COMMANDS[best]
    if variant is IMVariant.PROB:
        return _sample(np.cumsum(prob_from_q(q)), rng)
    return _sample(random_cum, rng)


def im_decide(im: InverseModel, blob, rng: np.random.Generator | None = None) -> MotorCommand:
    if im.variant is IMVariant.RANDOM:
        return _sample(im._cum, rng)
    return decide_from_q(im.variant, im.canonical_q(blob), rng)


# --- short-term search -----------------------------------------------------

@dataclass(frozen=True)
class CostParams:
    forward: float = 0.0
    rotation: float = 20.0
    translation_rotation_switch: float = 10.0
    rotation_reversal: float = 1000.0

    def __post_init__(self):
        if min(self.forward, self.rotation, self.translation_rotation_switch, self.rotation_reversal) < 0:
            raise ValueError("costs must be non-negative")

    def move(self, cmd: MotorCommand) -> float:
        return self.forward if cmd is F else self.rotation

    def switch(self, a: MotorCommand, b: MotorCommand) -> float:
        if a is b:
            return 0.0
        if a is F or b is F:
            return self.translation_rotation_switch
        return self.rotation_reversal

    def sequence_cost(self, seq) -> float:
        total = sum(self.move(c) for c in seq)
        return total + sum(self.switch(a, b) for a, b in zip(seq[:-1], seq[1:]))


def short_term_search(state, fm: VisualFM, tactile: TactileFM, depth: int = 7,
                      costs: CostParams = CostParams(),
                      corrector: PredictionCorrector | None = None) -> MotorCommand | None:
    """First move of the cheapest collision-free command sequence of length ``depth``.

    All 3**depth sequences are enumerated level by level; prefixes that hit
    a predicted collision are dropped with all their continuations. Ties go
    to the lexicographically smallest sequence under F < L < R.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    data = state.data if isinstance(state, SensoryState) else np.asarray(state, dtype=float).reshape(-1, 4)
    n = len(data)
    thr = tactile.collision_width_threshold
    states = data[None, :, :]
    codes = np.zeros(1, dtype=np.int64)
    cost = np.zeros(1)
    last = np.full(1, -1)
    move = np.array([costs.move(c) for c in COMMANDS])
    switch = np.array([[costs.switch(a, b) for b in COMMANDS] for a in COMMANDS])
    for _ in range(depth):
        k = len(codes)
        nxt_states, nxt_codes, nxt_cost, nxt_last = [], [], [], []
        for ci, cmd in enumerate(COMMANDS):
            ns = predict_array(fm, states.reshape(k * n, 4), cmd, corrector).reshape(k, n, 4)
            ok = ~np.any(ns[:, :, 0] > thr, axis=1) if n else np.ones(k, dtype=bool)
            if not ok.any():
                continue
            c = cost[ok] + move[ci]
            prev = last[ok]
            c = c + np.where(prev >= 0, switch[np.maximum(prev, 0), ci], 0.0)
            nxt_states.append(ns[ok])
            nxt_codes.append(codes[ok] * 3 + ci)
            nxt_cost.append(c)
            nxt_last.append(np.full(int(ok.sum()), ci))
        if not nxt_codes:
            return None
        states = np.concatenate(nxt_states)
        codes = np.concatenate(nxt_codes)
        cost = np.concatenate(nxt_cost)
        last = np.concatenate(nxt_last)
    best = np.lexsort((codes, cost))[0]
    return COMMANDS[int(codes[best] // 3 ** (depth - 1))]


# --- training --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IMTrainingExample:
    blob: BlobImage
    label: MotorCommand


@dataclass(frozen=True)
class IMTrainConfig:
    n_dead_ends: int = 3
    n_corridors: int = 3
    n_starts: int = 4
    n_steps: int = 50
    depth: int = 7
    n_components: int = 8
    walk_probs: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    costs: CostParams = CostParams()
    noise: DegradationConfig = DegradationConfig()
    bumper_radius: float = 0.30


def _start_poses(scene: WorldScene, n: int, rng: np.random.Generator, bumper: float) -> list[Pose]:
    poses = [scene.robot_start]
    c = scene.centers()
    lo, hi = c.min(axis=0) - 0.2, c.max(axis=0) + 0.2
    lo[1] = min(lo[1], scene.robot_start.y)
    tries = 0
    while len(poses) < n and tries < 1000:
        tries += 1
        p = Pose(rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]), rng.uniform(0, 2 * math.pi))
        if not check_collision(p, scene, bumper + 0.05):
            poses.append(p)
    return poses


def build_im_training_set(scenes, fm: VisualFM, tactile: TactileFM, camera: CameraModel,
                          cfg: IMTrainConfig, rng: np.random.Generator,
                          actuation: ActuationParams = ActuationParams()) -> list[IMTrainingExample]:
    """Random real walks; at each step the best first move of a short-term search is the label."""
    examples = []
    probs = np.asarray(cfg.walk_probs, dtype=float)
    probs = probs / probs.sum()
    for scene in scenes:
        for pose in _start_poses(scene, cfg.n_starts, rng, cfg.bumper_radius):
            for _ in range(cfg.n_steps):
                obs = degrade_observation(project_scene(scene, pose, camera), cfg.noise, rng, camera.image_width)
                label = short_term_search(obs, fm, tactile, cfg.depth, cfg.costs)
                if label is not None:
                    examples.append(IMTrainingExample(
                        BlobImage(render_blob_array(obs.data, camera.image_width, camera.image_height)), label))
                order = rng.permutation(3) if probs.max() == probs.min() else \
                    rng.choice(3, size=3, replace=False, p=probs)
                for ci in order:
                    nxt = apply_motor(pose, COMMANDS[int(ci)], actuation)
                    if not check_collision(nxt, scene, cfg.bumper_radius):
                        pose = nxt
                        break
    return examples


def train_inverse_model(examples, n_components: int = 8, variant: IMVariant = IMVariant.DET) -> InverseModel:
    """Fit the three pairwise modules; each sees only examples labelled with one of its pair."""
    X = np.array([e.blob.vector for e in examples], dtype=float)
    labels = [e.label for e in examples]
    modules = []
    for m1, m2 in PAIRS:
        rows = [i for i, lab in enumerate(labels) if lab is m1 or lab is m2]
        q = np.array([1.0 if labels[i] is m1 else 0.0 for i in rows])
        mean, beta = pls_fit(X[rows], q, n_components)
        modules.append(RegressionModule((m1, m2), mean, beta))
    return InverseModel(tuple(modules), variant, n_components=n_components)


# --- files -----------------------------------------------------------------

def im_to_text(im: InverseModel) -> str:
    lines = [f"variant {im.variant.name}", f"n_components {im.n_components}"]
    for m in im.modules:
        lines.append(f"module {m.pair[0].value} {m.pair[1].value}")
        lines.append("mean " + " ".join(repr(float(v)) for v in m.mean))
        lines.append("beta " + " ".join(repr(float(v)) for v in m.beta))
    return "\n".join(lines) + "\n"


def im_from_text(text: str) -> InverseModel:
    variant, ncomp, modules, pair, mean = IMVariant.DET, 8, [], None, None
    for raw in text.splitlines():
        key, _, rest = raw.partition(" ")
        if key == "variant":
            variant = IMVariant[rest.strip()]
        elif key == "n_components":
            ncomp = int(rest)
        elif key == "module":
            a, b = rest.split()
            pair = (MotorCommand(a), MotorCommand(b))
        elif key == "mean":
            mean = np.array(rest.split(), dtype=float)
        elif key == "beta":
            modules.append(RegressionModule(pair, mean, np.array(rest.split(), dtype=float)))
    return InverseModel(tuple(modules), variant, n_components=ncomp)


def to_pgm(values, shape=(BLOB_H, BLOB_W)) -> bytes:
    """Plain (P2) graymap; booleans map to 0/255, reals are min-max scaled."""
    arr = np.asarray(values).reshape(shape)
    if arr.dtype == bool:
        img = arr.astype(int) * 255
    else:
        lo, hi = float(arr.min()), float(arr.max())
        img = np.zeros(shape, dtype=int) if hi <= lo else np.rint(255 * (arr - lo) / (hi - lo)).astype(int)
    rows = [" ".join(str(v) for v in row) for row in img]
    return (f"P2\n{shape[1]} {shape[0]}\n255\n" + "\n".join(rows) + "\n").encode()
