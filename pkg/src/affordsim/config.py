"""Top-level configuration, its key-value file format, and the model-training pipeline."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .forward_models import (PAPER_CORRECTOR, PAPER_FM, FMCollectConfig, PredictionCorrector, TactileFM,
                             VisualFM, calibrate_tactile_threshold, examples_from_sequences,
                             fit_prediction_corrector, fit_visual_fm, record_sequences)
from .inverse_model import CostParams, IMTrainConfig, IMVariant, build_im_training_set, train_inverse_model
from .sensor import (PAPER_CORRECTION, CameraModel, CorrectionModel, DegradationConfig, fit_correction_model)
from .simulation import CorridorCriterion, Models
from .world import ActuationParams, SceneGenConfig, generate_scene


@dataclass(frozen=True)
class PipelineConfig:
    camera: CameraModel = CameraModel()
    actuation: ActuationParams = ActuationParams()
    scenes: SceneGenConfig = SceneGenConfig()
    observation_noise: DegradationConfig = DegradationConfig()
    fm_collect: FMCollectConfig = FMCollectConfig()
    im_train: IMTrainConfig = IMTrainConfig()
    criterion: CorridorCriterion = CorridorCriterion()
    bumper_radius: float = 0.30
    correction_y_split: float = 135.0
    correction_samples: int = 4000
    use_corrector: bool = True
    paper_coefficients: bool = False
    seed: int = 2012
    # evaluation grid
    n_dead_ends: int = 10
    n_corridors: int = 10
    runs_per_scene: int = 5
    scene_seed: int = 1


def _flatten(obj, prefix=""):
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        key = prefix + f.name
        if dataclasses.is_dataclass(value):
            yield from _flatten(value, key + ".")
        else:
            yield key, value


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return " ".join(_format(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def config_to_text(cfg: PipelineConfig) -> str:
    return "".join(f"{k} {_format(v)}\n" for k, v in _flatten(cfg))


def _parse(raw: str, current):
    if isinstance(current, bool):
        if raw.lower() not in ("true", "false", "1", "0"):
            raise ValueError(f"not a boolean: {raw!r}")
        return raw.lower() in ("true", "1")
    if isinstance(current, tuple):
        parts = raw.split()
        if len(parts) != len(current):
            raise ValueError(f"expected {len(current)} values, got {raw!r}")
        return tuple(_parse(p, c) for p, c in zip(parts, current))
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


def _replace_path(obj, path, raw):
    head, rest = path[0], path[1:]
    names = {f.name for f in dataclasses.fields(obj)}
    if head not in names:
        raise KeyError(head)
    current = getattr(obj, head)
    if rest and not dataclasses.is_dataclass(current):
        raise KeyError(head)
    new = _replace_path(current, rest, raw) if rest else _parse(raw, current)
    return dataclasses.replace(obj, **{head: new})


def config_from_text(text: str, base: PipelineConfig = PipelineConfig()) -> PipelineConfig:
    """Apply ``dotted.key value`` lines on top of ``base``; '#' starts a comment."""
    cfg = base
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition(" ")
        try:
            cfg = _replace_path(cfg, key.split("."), value.strip())
        except KeyError:
            raise ValueError(f"line {n}: unknown key {key!r}") from None
    return cfg


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        return config_from_text(fh.read())


# --- training pipeline -----------------------------------------------------

@dataclass
class TrainedModels:
    fm: VisualFM
    tactile: TactileFM
    corrector: PredictionCorrector
    correction: CorrectionModel
    im: object = None
    im_examples: list = field(default_factory=list)
    fm_sequences: list = field(default_factory=list)

    def models(self, variant: IMVariant = IMVariant.DET, use_corrector: bool = True, camera=CameraModel()) -> Models:
        corr = self.corrector if use_corrector else None
        return Models(self.fm, self.tactile, self.im.with_variant(variant), corr, self.correction,
                      float(camera.image_width), float(camera.image_height))


def correction_dataset(cfg: PipelineConfig, rng: np.random.Generator) -> np.ndarray:
    """(w, x, y, h) rows of single unoccluded obstacles at random distances, with sensor noise."""
    cam, nz = cfg.camera, cfg.observation_noise
    n = cfg.correction_samples
    # uniform in image row, i.e. in inverse distance
    d = 1.0 / rng.uniform(1.0 / cam.max_range, 1.0 / (cfg.scenes.radius + 0.15), n)
    top = cam.row_of(d, cfg.scenes.height)
    bottom = np.minimum(cam.row_of(d, 0.0), cam.chassis_occlusion_row)
    return np.column_stack([cam.width_of(d, cfg.scenes.radius) + rng.normal(0, nz.sigma_w, n),
                            np.zeros(n),
                            top + rng.normal(0, nz.sigma_y, n),
                            bottom - top + rng.normal(0, nz.sigma_h, n)])


def train_forward_models(cfg: PipelineConfig, rng: np.random.Generator, keep_sequences: bool = False):
    tactile = calibrate_tactile_threshold(cfg.camera, cfg.bumper_radius, cfg.scenes.radius)
    if cfg.paper_coefficients:
        return TrainedModels(PAPER_FM, tactile, PAPER_CORRECTOR, PAPER_CORRECTION)
    seqs = record_sequences(cfg.camera, cfg.fm_collect, rng, cfg.actuation)
    data = examples_from_sequences(seqs)
    fm = fit_visual_fm(data, cfg.camera.image_width)
    corrector = fit_prediction_corrector([e.segment for e in data])
    correction = fit_correction_model(correction_dataset(cfg, rng), cfg.correction_y_split)
    return TrainedModels(fm, tactile, corrector, correction, fm_sequences=seqs if keep_sequences else [])


def training_scenes(cfg: PipelineConfig):
    t = cfg.im_train
    # seeds kept apart from the evaluation scenes drawn by the experiment harness
    return ([generate_scene("DeadEnd", (cfg.seed, 7, i), cfg.scenes) for i in range(t.n_dead_ends)]
            + [generate_scene("Corridor", (cfg.seed, 8, i), cfg.scenes) for i in range(t.n_corridors)])


def train_models(cfg: PipelineConfig = PipelineConfig()) -> TrainedModels:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    trained = train_forward_models(cfg, rng)
    im_cfg = dataclasses.replace(cfg.im_train, bumper_radius=cfg.bumper_radius)
    examples = build_im_training_set(training_scenes(cfg), trained.fm, trained.tactile, cfg.camera,
                                     im_cfg, rng, cfg.actuation)
    trained.im = train_inverse_model(examples, cfg.im_train.n_components)
    trained.im_examples = examples
    return trained


def experiment_config(cfg: PipelineConfig, conditions=None):
    from .experiment import ExperimentConfig
    from .simulation import ALL_CONDITIONS
    return ExperimentConfig(cfg.n_dead_ends, cfg.n_corridors, cfg.runs_per_scene,
                            tuple(conditions) if conditions else ALL_CONDITIONS, cfg.seed, cfg.scene_seed,
                            cfg.scenes, cfg.observation_noise, cfg.criterion, cfg.camera)


__all__ = ["experiment_config", "PipelineConfig", "config_to_text", "config_from_text", "load_config", "TrainedModels",
           "correction_dataset", "train_forward_models", "training_scenes", "train_models", "CostParams"]
