"""dyncorr: learning state-to-state correspondences between dynamical
systems through a shared latent state space and latent dynamics model."""

__version__ = "0.1.0"

from .dynsys import (  # noqa: F401
    NormalizationStats,
    SystemSpec,
    TrajectoryDataset,
    collect_dataset,
    load_dataset,
    make_spec,
    save_dataset,
    step,
)
from .losses import LossBreakdown, LossWeights, total_loss  # noqa: F401
from .model import CorrespondenceModel  # noqa: F401
from .trainer import PRESETS, TrainConfig, load_model, save_model, train  # noqa: F401
