"""Condition grid over scene sets, metric tables, and bird's-eye renderings."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .inverse_model import IMVariant
from .sensor import CameraModel, DegradationConfig, WidthDistanceCalibration, degrade_observation, project_scene
from .simulation import (ALL_CONDITIONS, AntiOscillation, CorridorCriterion, Models, Restart, RunResult,
                         TaskCondition, run_simulation)
from .world import ActuationParams, SceneGenConfig, WorldScene, generate_scene, integrate_commands

ROW_ORDER = (AntiOscillation.NONE, AntiOscillation.FORWARD, AntiOscillation.FORWARD_CONTINUE,
             AntiOscillation.CONTINUE)
ROW_NAMES = {AntiOscillation.NONE: "NONE", AntiOscillation.FORWARD: "FORWARD",
             AntiOscillation.FORWARD_CONTINUE: "FORW.-CONTINUE", AntiOscillation.CONTINUE: "CONTINUE"}
COLUMN_ORDER = tuple((v, r) for v in IMVariant for r in (Restart.FULL, Restart.PARTIAL))


class MissingModelError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    n_dead_ends: int = 10
    n_corridors: int = 10
    runs_per_scene: int = 5
    conditions: tuple = ALL_CONDITIONS
    master_seed: int = 2012
    scene_seed: int = 1
    scenes: SceneGenConfig = SceneGenConfig()
    noise: DegradationConfig = DegradationConfig()
    criterion: CorridorCriterion = CorridorCriterion()
    camera: CameraModel = CameraModel()

    def __post_init__(self):
        if self.runs_per_scene < 1:
            raise ValueError("runs_per_scene must be >= 1")
        if self.n_dead_ends < 0 or self.n_corridors < 0:
            raise ValueError("scene counts must be non-negative")


def build_scene_set(cfg: ExperimentConfig) -> list[WorldScene]:
    return ([generate_scene("DeadEnd", (cfg.scene_seed, 0, i), cfg.scenes) for i in range(cfg.n_dead_ends)]
            + [generate_scene("Corridor", (cfg.scene_seed, 1, i), cfg.scenes) for i in range(cfg.n_corridors)])


def initial_observation(scene: WorldScene, index: int, cfg: ExperimentConfig):
    """The single recorded image of a scene, shown unchanged on every repetition."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, 9999, index]))
    return degrade_observation(project_scene(scene, scene.robot_start, cfg.camera), cfg.noise, rng,
                               cfg.camera.image_width)


def child_seed(master: int, cond_idx: int, scene_idx: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master, cond_idx, scene_idx, rep])


@dataclass
class RunRecord:
    condition: TaskCondition
    scene_index: int
    label: str
    repetition: int
    classification: str
    n_trials: int
    fm_invocations: int
    im_invocations: int


def _mean_sd(values):
    if not values:
        return None
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std(ddof=1)) if len(arr) > 1 else 0.0


@dataclass
class ConditionMetrics:
    corridor_success: float | None      # percent; None when no corridor runs
    deadend_success: float | None
    trials: tuple | None                # mean, sd over correctly classified corridor runs
    fm_invocations: tuple | None        # mean, sd over all runs
    n_runs: int


def condition_metrics(records) -> ConditionMetrics:
    cor = [r for r in records if r.label == "Corridor"]
    de = [r for r in records if r.label == "DeadEnd"]
    pct = (lambda rs, lab: 100.0 * sum(r.classification == lab for r in rs) / len(rs) if rs else None)
    hits = [r.n_trials for r in cor if r.classification == "Corridor"]
    return ConditionMetrics(pct(cor, "Corridor"), pct(de, "DeadEnd"), _mean_sd(hits),
                            _mean_sd([r.fm_invocations for r in records]), len(records))


@dataclass
class MetricsTable:
    metrics: dict = field(default_factory=dict)     # TaskCondition -> ConditionMetrics
    records: list = field(default_factory=list)

    def __getitem__(self, cond: TaskCondition) -> ConditionMetrics:
        return self.metrics[cond]

    @classmethod
    def from_records(cls, records) -> "MetricsTable":
        by_cond: dict = {}
        for r in records:
            by_cond.setdefault(r.condition, []).append(r)
        order = [c for c in ALL_CONDITIONS if c in by_cond]
        return cls({c: condition_metrics(by_cond[c]) for c in order}, list(records))


def _run_condition(cfg: ExperimentConfig, cond: TaskCondition, m: Models, scenes, observations) -> list:
    cond_idx = ALL_CONDITIONS.index(cond)
    records = []
    for si, (scene, obs) in enumerate(zip(scenes, observations)):
        cached = None
        for rep in range(cfg.runs_per_scene):
            if cached is not None:
                run = cached
            else:
                rng = np.random.default_rng(child_seed(cfg.master_seed, cond_idx, si, rep))
                run = run_simulation(obs, m, cond, cfg.criterion, rng)
                if cond.im_variant is IMVariant.DET and cond.restart is Restart.FULL:
                    cached = run    # no randomness anywhere in this condition
            records.append(RunRecord(cond, si, scene.label, rep, run.classification, run.n_trials,
                                     run.fm_invocations, run.im_invocations))
    return records


def run_experiment(cfg: ExperimentConfig, models: dict | None, progress=None, workers: int = 1) -> MetricsTable:
    """``models`` maps each IMVariant in use to a ready Models bundle.

    With ``workers > 1`` conditions run in a process pool; every run has its own seed,
    so the table does not depend on the worker count.
    """
    scenes = build_scene_set(cfg)
    observations = [initial_observation(s, i, cfg) for i, s in enumerate(scenes)]
    for cond in cfg.conditions:
        if not models or cond.im_variant not in models:
            raise MissingModelError(f"no trained models for {cond.im_variant.name}")
    jobs = [(cfg, cond, models[cond.im_variant], scenes, observations) for cond in cfg.conditions]
    by_cond = {}
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            futures = {pool.submit(_run_condition, *job): job[1] for job in jobs}
            for fut in futures:
                by_cond[futures[fut]] = fut.result()
                if progress is not None:
                    progress(futures[fut])
    else:
        for job in jobs:
            by_cond[job[1]] = _run_condition(*job)
            if progress is not None:
                progress(job[1])
    return MetricsTable.from_records([r for cond in cfg.conditions for r in by_cond[cond]])


# --- export ----------------------------------------------------------------

def _fmt_pct(v):
    return "n/a" if v is None else f"{v:.1f}"


def _cell(metric: str, m: ConditionMetrics | None) -> str:
    if m is None:
        return "-"
    if metric == "success":
        return f"{_fmt_pct(m.corridor_success)} / {_fmt_pct(m.deadend_success)}"
    pair = m.trials if metric == "trials" else m.fm_invocations
    if pair is None:
        return "n/a"
    return f"{pair[0]:.2f} ({pair[1]:.2f})" if metric == "trials" else f"{pair[0]:.0f} ({pair[1]:.0f})"


METRIC_TITLES = {"success": "success rate % (corridor / dead end)",
                 "trials": "trials over successful corridor runs, mean (sd)",
                 "fm": "FM invocations over all runs, mean (sd)"}


def metrics_to_text(table: MetricsTable, fmt: str = "tsv") -> str:
    """Three blocks in the anti-oscillation x (IM, restart) layout; rows without data are left out."""
    if fmt not in ("tsv", "csv"):
        raise ValueError("fmt must be tsv or csv")
    delim = "\t" if fmt == "tsv" else ","
    header = ["mode"] + [f"{v.name} {r.name}" for v, r in COLUMN_ORDER]
    present = {c.anti_osc for c in table.metrics}
    blocks = []
    for metric, title in METRIC_TITLES.items():
        lines = [f"# {title}", delim.join(header)]
        for mode in ROW_ORDER:
            if mode not in present:
                continue
            cells = [_cell(metric, table.metrics.get(TaskCondition(v, mode, r))) for v, r in COLUMN_ORDER]
            lines.append(delim.join([ROW_NAMES[mode]] + cells))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def export_metrics(table: MetricsTable, path, fmt: str = "tsv") -> None:
    text = metrics_to_text(table, fmt)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def records_to_text(records) -> str:
    lines = ["condition\tscene\tlabel\trep\tclassification\ttrials\tfm\tim"]
    lines += [f"{r.condition.label}\t{r.scene_index}\t{r.label}\t{r.repetition}\t{r.classification}\t"
              f"{r.n_trials}\t{r.fm_invocations}\t{r.im_invocations}" for r in records]
    return "\n".join(lines) + "\n"


# --- bird's-eye rendering --------------------------------------------------

def perceived_obstacles(state, robot, calibration: WidthDistanceCalibration, camera: CameraModel = CameraModel()):
    """World positions implied by each segment's (x, w): bearing from x, distance from w."""
    out = []
    for oid, (w, x, _y, _h) in zip(state.ids, state.data):
        d = float(calibration.distance(w))
        theta = robot.heading - x / camera.px_per_rad
        out.append((int(oid), robot.x + d * math.cos(theta), robot.y + d * math.sin(theta)))
    return out


def trajectories(run: RunResult | None, start, actuation: ActuationParams = ActuationParams()):
    if run is None:
        return []
    return [np.array([(p.x, p.y) for p in integrate_commands(start, t.sequence, actuation)])
            for t in run.trials]


def render_birdseye(scene: WorldScene, run: RunResult | None, initial_state, calibration: WidthDistanceCalibration,
                    path=None, camera: CameraModel = CameraModel(), radius: float = 0.20,
                    show_truth: bool = False, actuation: ActuationParams = ActuationParams()) -> str:
    """SVG of perceived obstacles and every trial's integrated path; returned and optionally written."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "affordsim"
    fig, ax = plt.subplots(figsize=(5, 6))
    if show_truth:
        for ob in scene.obstacles:
            ax.add_patch(plt.Circle(ob.center, ob.radius, fill=False, ls="--", color="0.6"))
    for _oid, px, py in perceived_obstacles(initial_state, scene.robot_start, calibration, camera):
        ax.add_patch(plt.Circle((px, py), radius, color="0.2"))
    for k, xy in enumerate(trajectories(run, scene.robot_start, actuation)):
        final = run is not None and k == len(run.trials) - 1 and run.classification == "Corridor"
        ax.plot(xy[:, 0], xy[:, 1], lw=1.5 if final else 0.6, color="tab:red" if final else "tab:blue")
    s = scene.robot_start
    ax.add_patch(plt.Circle((s.x, s.y), 0.3, fill=False, color="k"))
    ax.plot([s.x, s.x + 0.3 * math.cos(s.heading)], [s.y, s.y + 0.3 * math.sin(s.heading)], color="k")
    ax.set_aspect("equal")
    ax.autoscale_view()
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    svg = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(svg)
    return svg
