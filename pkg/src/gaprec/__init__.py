"""Gap-filling encoder-decoder toolkit for session-based recommendation."""

from .autodiff import ConvKernel, Tensor, backward
from .data import SessionBatch, Vocabulary
from .masking import MaskPlan, sample_gaps
from .metrics import EvalReport, evaluate_last_item
from .models import (GRecModel, ModelConfig, MostPopModel, NextItNetModel,
                     TwoWayModel, build_model, infer_next_topN)
from .training import TrainConfig, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "ConvKernel", "Tensor", "backward",
    "SessionBatch", "Vocabulary",
    "MaskPlan", "sample_gaps",
    "EvalReport", "evaluate_last_item",
    "GRecModel", "ModelConfig", "MostPopModel", "NextItNetModel",
    "TwoWayModel", "build_model", "infer_next_topN",
    "TrainConfig", "TrainResult", "train",
    "__version__",
]
