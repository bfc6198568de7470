"""Long-term internal simulation: trials, anti-oscillation editing, restarts and runs."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .forward_models import PredictionCorrector, TactileFM, VisualFM, predict_array
from .inverse_model import IMVariant, InverseModel, _sample, decide_from_q, render_blob_array
from .sensor import CorrectionModel, SensoryState, correct_initial_state
from .world import MotorCommand

F, L, R = MotorCommand.FORWARD, MotorCommand.LEFT, MotorCommand.RIGHT


class AntiOscillation(Enum):
    NONE = "none"
    CONTINUE = "continue"
    FORWARD = "forward"
    FORWARD_CONTINUE = "forward-continue"


class Restart(Enum):
    FULL = "full"
    PARTIAL = "partial"


class Outcome(Enum):
    CORRIDOR_FOUND = "CorridorFound"
    TURN_LIMIT = "TurnLimitViolated"
    IMBALANCE = "ImbalanceViolated"
    COLLISION = "CollisionPredicted"
    INVOCATION_CAP = "InvocationCapReached"


@dataclass(frozen=True)
class CorridorCriterion:
    max_steps: int = 60
    max_turns: int = 20
    max_turn_imbalance: int = 10
    max_trials: int = 30
    im_invocation_cap: int = 300

    def __post_init__(self):
        if min(self.max_steps, self.max_turns, self.max_turn_imbalance, self.max_trials,
               self.im_invocation_cap) <= 0:
            raise ValueError("criterion limits must be positive")


@dataclass(frozen=True)
class TaskCondition:
    im_variant: IMVariant
    anti_osc: AntiOscillation
    restart: Restart

    @property
    def label(self) -> str:
        return f"{self.im_variant.value}/{self.anti_osc.value}/{self.restart.value}"

    @classmethod
    def parse(cls, text: str) -> "TaskCondition":
        parts = text.lower().split("/")
        if len(parts) != 3:
            raise ValueError(f"condition must be im/anti-osc/restart, got {text!r}")
        return cls(IMVariant(parts[0]), AntiOscillation(parts[1].replace("_", "-")), Restart(parts[2]))


ALL_CONDITIONS = tuple(TaskCondition(v, a, r) for v in IMVariant for a in AntiOscillation for r in Restart)


class CriterionTracker:
    """Incremental turn bookkeeping for one growing command sequence."""

    __slots__ = ("criterion", "n_left", "n_right")

    def __init__(self, criterion: CorridorCriterion):
        self.criterion = criterion
        self.n_left = 0
        self.n_right = 0

    def add(self, cmd: MotorCommand):
        if cmd is L:
            self.n_left += 1
        elif cmd is R:
            self.n_right += 1

    def remove(self, cmd: MotorCommand):
        if cmd is L:
            self.n_left -= 1
        elif cmd is R:
            self.n_right -= 1

    def status(self, collision: bool) -> Outcome | None:
        if collision:
            return Outcome.COLLISION
        if self.n_left + self.n_right > self.criterion.max_turns:
            return Outcome.TURN_LIMIT
        if abs(self.n_left - self.n_right) > self.criterion.max_turn_imbalance:
            return Outcome.IMBALANCE
        return None


def check_corridor_criterion(sequence, collision: bool,
                             criterion: CorridorCriterion = CorridorCriterion()) -> Outcome | None:
    """None while the prefix is acceptable, otherwise the violated condition."""
    tracker = CriterionTracker(criterion)
    for cmd in sequence:
        tracker.add(cmd)
    return tracker.status(collision)


@dataclass(frozen=True, eq=False)
class Models:
    fm: VisualFM
    tactile: TactileFM
    im: InverseModel
    corrector: PredictionCorrector | None = None
    correction: CorrectionModel | None = None
    image_width: float = 1571.0
    image_height: float = 214.0


@dataclass
class TrialResult:
    sequence: list
    outcome: Outcome
    fm_invocations: int
    im_invocations: int
    prefix_length: int = 0
    states: list | None = None       # predicted (n, 4) arrays after each appended command
    collisions: list | None = None

    def displacement(self, forward_step: float = 0.10, turn_angle: float = 2 * math.pi * 60 / 1571) -> float:
        x = y = th = 0.0
        for cmd in self.sequence:
            if cmd is F:
                x += forward_step * math.cos(th)
                y += forward_step * math.sin(th)
            else:
                th += turn_angle if cmd is L else -turn_angle
        return math.hypot(x, y)


@dataclass
class RunResult:
    classification: str
    trials: list
    fm_invocations: int
    im_invocations: int

    @property
    def n_trials(self) -> int:
        return len(self.trials)


class _Trial:
    """Mutable state of one trial; every FM batch step goes through ``predict``."""

    def __init__(self, data, models: Models, criterion: CorridorCriterion, record: bool):
        self.data = data
        self.models = models
        self.seq: list[MotorCommand] = []
        self.tracker = CriterionTracker(criterion)
        self.fm_inv = 0
        self.record = record
        self.states = [] if record else None
        self.collisions = [] if record else None
        self.thr = models.tactile.collision_width_threshold

    def predict(self, data, cmd):
        self.fm_inv += 1
        return predict_array(self.models.fm, data, cmd, self.models.corrector)

    def collides(self, data) -> bool:
        return len(data) > 0 and bool(np.any(data[:, 0] > self.thr))

    def append(self, cmd, data) -> Outcome | None:
        self.seq.append(cmd)
        self.tracker.add(cmd)
        self.data = data
        hit = self.collides(data)
        if self.record:
            self.states.append(data)
            self.collisions.append(hit)
        return self.tracker.status(hit)

    def pop(self):
        cmd = self.seq.pop()
        self.tracker.remove(cmd)
        if self.record:
            self.states.pop()
            self.collisions.pop()
        return cmd


def apply_anti_oscillation(mode: AntiOscillation, trial: _Trial, cmd: MotorCommand) -> Outcome | None:
    """Handle an IM command against the tail of the trial's sequence.

    Appends (or, for the FORWARD modes, deletes and replaces) commands and
    returns the first criterion violation met on the way, if any.
    """
    prev = trial.seq[-1] if trial.seq else None
    oscillating = cmd.is_turn and prev is not None and prev.is_turn and prev is not cmd
    if not oscillating or mode is AntiOscillation.NONE:
        return trial.append(cmd, trial.predict(trial.data, cmd))
    if mode is AntiOscillation.CONTINUE:
        return trial.append(prev, trial.predict(trial.data, prev))
    # FORWARD / FORWARD_CONTINUE: drop both turns; the second rotation undoes the first
    first = trial.pop()
    restored = trial.predict(trial.data, cmd)
    trial.data = restored
    ahead = trial.predict(restored, F)
    if not trial.collides(ahead):
        return trial.append(F, ahead)
    if mode is AntiOscillation.FORWARD_CONTINUE:
        status = trial.append(first, trial.predict(restored, first))
        if status is not None:
            return status
        return trial.append(first, trial.predict(trial.data, first))
    return None


def run_trial(initial, models: Models, condition: TaskCondition,
              criterion: CorridorCriterion = CorridorCriterion(), rng: np.random.Generator | None = None,
              resume_prefix=None, record: bool = False) -> TrialResult:
    """Simulate one command sequence from an (already corrected) initial state."""
    data = initial.data if isinstance(initial, SensoryState) else np.asarray(initial, dtype=float).reshape(-1, 4)
    trial = _Trial(data, models, criterion, record)
    im = models.im
    variant = condition.im_variant
    W, H = models.image_width, models.image_height
    prefix = list(resume_prefix or [])
    status = None
    for cmd in prefix:
        status = trial.append(cmd, trial.predict(trial.data, cmd))
        if status is not None:
            return _result(trial, status, 0, len(prefix))
    im_inv = 0
    while True:
        if len(trial.seq) >= criterion.max_steps:
            return _result(trial, Outcome.CORRIDOR_FOUND, im_inv, len(prefix))
        if im_inv >= criterion.im_invocation_cap:
            return _result(trial, Outcome.INVOCATION_CAP, im_inv, len(prefix))
        im_inv += 1
        if variant is IMVariant.RANDOM:
            cmd = _sample(im._cum, rng)
        else:
            blob = render_blob_array(trial.data, W, H)
            cmd = decide_from_q(variant, im.canonical_q(blob.reshape(-1)), rng)
        status = apply_anti_oscillation(condition.anti_osc, trial, cmd)
        if status is not None:
            return _result(trial, status, im_inv, len(prefix))


def _result(trial: _Trial, outcome: Outcome, im_inv: int, prefix_len: int) -> TrialResult:
    return TrialResult(trial.seq, outcome, trial.fm_inv, im_inv, prefix_len, trial.states, trial.collisions)


def make_restart_prefix(mode: Restart, previous: TrialResult | None, rng: np.random.Generator):
    """FULL: no prefix. PARTIAL: a random cut in the first two thirds plus three equal rotations."""
    if mode is Restart.FULL or previous is None:
        return None
    seq = previous.sequence
    hi = (2 * len(seq)) // 3
    cut = int(rng.integers(0, hi)) if hi > 0 else 0
    turn = L if rng.random() < 0.5 else R
    return list(seq[:cut]) + [turn] * 3


def run_simulation(observation: SensoryState, models: Models, condition: TaskCondition,
                   criterion: CorridorCriterion = CorridorCriterion(), rng: np.random.Generator | None = None,
                   record: bool = False) -> RunResult:
    if rng is None:
        rng = np.random.default_rng(0)
    initial = correct_initial_state(observation, models.correction) if models.correction is not None \
        else observation
    trials = []
    previous = None
    # DET with full restarts repeats the same trial; simulate it once
    repeat = condition.im_variant is IMVariant.DET and condition.restart is Restart.FULL
    for k in range(criterion.max_trials):
        if repeat and previous is not None:
            result = copy.copy(previous)
        else:
            prefix = None if k == 0 else make_restart_prefix(condition.restart, previous, rng)
            result = run_trial(initial, models, condition, criterion, rng, prefix, record)
        trials.append(result)
        if result.outcome is Outcome.CORRIDOR_FOUND:
            break
        previous = result
    found = trials[-1].outcome is Outcome.CORRIDOR_FOUND
    return RunResult("Corridor" if found else "DeadEnd", trials,
                     sum(t.fm_invocations for t in trials), sum(t.im_invocations for t in trials))


def trace_to_text(run: RunResult, initial: SensoryState | None = None) -> str:
    """Line-oriented trace; segment lines after each step carry the predicted state."""
    lines = []
    if initial is not None:
        lines.append(f"obs_state {initial.step_index}")
        lines += [f"seg {int(i)} " + " ".join(map(repr, row)) for i, row in zip(initial.ids, initial.data.tolist())]
    ids = initial.ids if initial is not None else None
    for n, trial in enumerate(run.trials):
        lines.append(f"trial {n} outcome {trial.outcome.value} prefix {trial.prefix_length}")
        for t, cmd in enumerate(trial.sequence):
            hit = int(trial.collisions[t]) if trial.collisions is not None else 0
            lines.append(f"trial {n} step {t + 1} cmd {cmd.value} collision {hit}")
            if trial.states is not None and ids is not None:
                lines += [f"seg {int(i)} " + " ".join(map(repr, row))
                          for i, row in zip(ids, np.asarray(trial.states[t]).tolist())]
    return "\n".join(lines) + "\n"


@dataclass
class ParsedTrace:
    initial: SensoryState | None
    trials: list = field(default_factory=list)      # list of command lists
    outcomes: list = field(default_factory=list)


def trace_from_text(text: str) -> ParsedTrace:
    init_ids, init_rows, in_init = [], [], False
    trace = ParsedTrace(None)
    for raw in text.splitlines():
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "obs_state":
            in_init = True
        elif parts[0] == "seg":
            if in_init:
                init_ids.append(int(parts[1]))
                init_rows.append([float(v) for v in parts[2:6]])
        elif parts[0] == "trial":
            in_init = False
            if parts[2] == "outcome":
                trace.trials.append([])
                trace.outcomes.append(Outcome(parts[3]))
            elif parts[2] == "step":
                trace.trials[-1].append(MotorCommand(parts[5]))
    if init_ids or "obs_state" in text:
        trace.initial = SensoryState(init_ids, np.asarray(init_rows).reshape(-1, 4))
    return trace
