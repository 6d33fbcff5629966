"""Synthetic end-to-end benchmark: scenes, proposals, features, training, evaluation."""

from .ablation import (COMPONENT_ROWS, SCHEDULE_ROWS, AblationReport, ExperimentResult,
                       PreparedData, ablation_grid, named_configs, prepare_data, run_experiment)
from .evaluation import Detections, Metrics, evaluate, infer
from .scenes import NUM_CLASSES, SceneSpec, SyntheticScene, dataset_hash, generate_dataset
from .training import RunConfig, TrainResult, build_datasets, prepare_images, train

__all__ = [
    "COMPONENT_ROWS", "SCHEDULE_ROWS", "AblationReport", "Detections", "ExperimentResult",
    "Metrics", "NUM_CLASSES", "PreparedData", "RunConfig", "SceneSpec", "SyntheticScene",
    "TrainResult", "ablation_grid", "build_datasets", "dataset_hash", "evaluate",
    "generate_dataset", "infer", "named_configs", "prepare_data", "prepare_images",
    "run_experiment", "train",
]
