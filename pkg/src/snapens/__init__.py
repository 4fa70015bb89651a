"""Neural network ensembles built from training snapshots."""

from .data_gen import NoiseSpec, RegressionDataset, SeriesEmbedding
from .ensemble_core import PredictionCube, Selection
from .mlp import SnapshotStore, TrainConfig
from .resample import BootstrapPlan, SplitSpec
from .selectors import SimAnnConfig

__version__ = "0.1.0"

__all__ = [
    "BootstrapPlan",
    "NoiseSpec",
    "PredictionCube",
    "RegressionDataset",
    "Selection",
    "SeriesEmbedding",
    "SimAnnConfig",
    "SnapshotStore",
    "SplitSpec",
    "TrainConfig",
]
