"""Predict how much an augmentation-consistency pretext task helps a target task.

The three knowledge indicators (unlearnable, unreliable, incomplete rates) are
estimated from small samples and combined into a predicted target risk.
"""

from pretextprobe.augment import PretextTask, task_grid
from pretextprobe.data import Dataset, read_dataset, write_dataset
from pretextprobe.errors import PretextProbeError
from pretextprobe.estimators import IndicatorEstimates, predict_target_risk, run_estimation_pipeline

__all__ = [
    "Dataset",
    "IndicatorEstimates",
    "PretextProbeError",
    "PretextTask",
    "predict_target_risk",
    "read_dataset",
    "run_estimation_pipeline",
    "task_grid",
    "write_dataset",
]

__version__ = "0.1.0"
