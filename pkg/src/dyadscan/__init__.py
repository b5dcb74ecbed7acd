"""Dyad classification from fNIRS hyperscanning recordings using channel-wise
DTW similarity and a small numpy CNN."""

__version__ = "0.1.0"

from .domain import (  # noqa: E402
    Dataset,
    DyadTrial,
    Participant,
    Provenance,
    SexComp,
    SimilaritySample,
    TaskType,
    TrialSeries,
    load_dataset,
    load_trials,
    save_dataset,
    save_trials,
)
from .dtw import dtw, dtw_distances, similarity_samples  # noqa: E402
from .errors import DyadscanError  # noqa: E402
from .evaluation import Task, run_task  # noqa: E402
from .nn import Arch, Network, TrainConfig, build_and_train, grad_check  # noqa: E402
from .preprocess import PreprocessConfig, preprocess_trials  # noqa: E402
from .stats import kde_fit, mann_whitney_u  # noqa: E402
from .synth import SynthSpec, generate_dataset, generate_trials  # noqa: E402

__all__ = [
    "Arch", "Dataset", "DyadTrial", "DyadscanError", "Network", "Participant",
    "PreprocessConfig", "Provenance", "SexComp", "SimilaritySample", "SynthSpec", "Task",
    "TaskType", "TrainConfig", "TrialSeries", "build_and_train", "dtw", "dtw_distances",
    "generate_dataset", "generate_trials", "grad_check", "kde_fit", "load_dataset",
    "load_trials", "mann_whitney_u", "preprocess_trials", "run_task", "save_dataset",
    "save_trials", "similarity_samples",
]
