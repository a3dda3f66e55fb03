"""Grid simulation, GPS-spoofing phase attacks, and neural spoof detection.

The pipeline: simulate a coupled linear multi-generator grid producing
time-tagged PMU rotor angles, inject time-varying spoof phase offsets,
assemble the labeled training matrix, train a sigmoid MLP detector, and
run the decision unit (threshold, localization, time-tag mux) to flag
and place attacks per PMU.
"""

from .attack import (AttackProfile, AttackScenario, ScenarioGeneratorConfig,
                     inject, random_scenario, theta_at)
from .dataset import (EmptyDatasetError, LabeledDataset, SplitSpec, concat,
                      preprocess, split, wrap_angle)
from .detector import (DetectionFrame, NormalizerConfig, localize, normalize,
                       run_pipeline)
from .evaluate import (DataGenConfig, EvalTable, ExperimentSpec, detection_percentage,
                       generate_training_matrix, run_eval_suite, run_experiment,
                       tune_alpha)
from .grid_sim import (BlockDimensionError, GridModel, InputStep, SimConfig,
                       SimulationDiverged, Trajectory, assemble_full_system,
                       default_model, discretize, load_model_config, simulate,
                       swing_model)
from .mlp import (CheckpointError, MlpNetwork, TrainConfig, TrainReport,
                  TrainingDiverged, accuracy, backward, forward, init_network,
                  load_checkpoint, save_checkpoint, train)

__version__ = "0.1.0"

__all__ = [
    "AttackProfile", "AttackScenario", "ScenarioGeneratorConfig", "inject",
    "random_scenario", "theta_at",
    "EmptyDatasetError", "LabeledDataset", "SplitSpec", "concat", "preprocess",
    "split", "wrap_angle",
    "DetectionFrame", "NormalizerConfig", "localize", "normalize", "run_pipeline",
    "DataGenConfig", "EvalTable", "ExperimentSpec", "detection_percentage",
    "generate_training_matrix", "run_eval_suite", "run_experiment", "tune_alpha",
    "BlockDimensionError", "GridModel", "InputStep", "SimConfig",
    "SimulationDiverged", "Trajectory", "assemble_full_system", "default_model",
    "discretize", "load_model_config", "simulate", "swing_model",
    "CheckpointError", "MlpNetwork", "TrainConfig", "TrainReport",
    "TrainingDiverged", "accuracy", "backward", "forward", "init_network",
    "load_checkpoint", "save_checkpoint", "train",
    "__version__",
]
