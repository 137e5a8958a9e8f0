"""Joint image-text vector quantization: one discrete sequence per pair.

A fused VQ autoencoder maps a 64x64 scene and its caption into a single
length-64 index sequence over a shared codebook; an autoregressive prior
over those sequences generates new image-text pairs unconditionally.
"""

__version__ = "0.1.0"

from .captions import (
    CORNERS,
    Color,
    InvalidSlotsError,
    PairKind,
    ParsedCaption,
    Position,
    Slot,
    caption_from_slots,
    infer_kind,
    parse_caption,
)
from .dataset import (
    DatasetConfig,
    build_dataset,
    build_degree_dataset,
    corrupt_to_degree,
    render_pair,
)
from .quantize import VectorQuantizer
from .stage1 import JointVQ, PairCodec, Stage1Config
from .baselines import ModelKind, build_model
from .prior import PriorConfig, SequencePrior
from .textcodec import Vocabulary
from .training import TrainConfig, train_prior, train_stage1

__all__ = [
    "CORNERS",
    "Color",
    "DatasetConfig",
    "InvalidSlotsError",
    "JointVQ",
    "ModelKind",
    "PairCodec",
    "PairKind",
    "ParsedCaption",
    "Position",
    "PriorConfig",
    "SequencePrior",
    "Slot",
    "Stage1Config",
    "TrainConfig",
    "VectorQuantizer",
    "Vocabulary",
    "build_dataset",
    "build_degree_dataset",
    "build_model",
    "caption_from_slots",
    "corrupt_to_degree",
    "infer_kind",
    "parse_caption",
    "render_pair",
    "train_prior",
    "train_stage1",
    "__version__",
]
