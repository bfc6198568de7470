"""Corridor vs dead-end detection by internal sensorimotor simulation on a synthetic robot."""
from .config import PipelineConfig, TrainedModels, train_models
from .experiment import ExperimentConfig, MetricsTable, metrics_to_text, run_experiment
from .forward_models import PredictionCorrector, TactileFM, VisualFM, fm_predict, predict_state
from .inverse_model import InverseModel, IMVariant, im_decide, render_blob_image, short_term_search
from .sensor import CameraModel, CorrectionModel, SensoryState, Segment, project_scene
from .simulation import (ALL_CONDITIONS, AntiOscillation, CorridorCriterion, Models, Restart, TaskCondition,
                         check_corridor_criterion, run_simulation)
from .world import MotorCommand, ObstacleDisk, Pose, WorldScene, apply_motor, generate_scene

__version__ = "0.1.0"
