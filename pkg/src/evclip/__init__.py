"""Prompt adaptation for frozen video-text encoders plus domain-shift analysis."""

from .archive import EmbeddingArchive, load_embedding_archive, write_embedding_archive
from .context import ContextGenerator, aggregate_video, baseline_video_feature, global_pool
from .embedding import (
    class_centroid,
    cosine_distance,
    cosine_similarity,
    pairwise_mean_distance,
)
from .encoders import EncoderDims, FrozenEncoderSet, VideoClip, make_toy_encoders
from .estimator import VideoPromptClassifier
from .exceptions import (
    ConfigurationError,
    DomainError,
    EvClipError,
    FormatError,
    VerificationError,
)
from .losses import consistency_loss, contrastive_cross_entropy, total_loss
from .mask import MaskGenerator, apply_mask, minmax_scale, pixel_softmax
from .training import (
    Episode,
    PromptModel,
    TrainConfig,
    Video,
    evaluate,
    forward_batch,
    grad_check,
    make_episode,
    train,
)

__all__ = [
    "ConfigurationError",
    "ContextGenerator",
    "DomainError",
    "EmbeddingArchive",
    "EncoderDims",
    "Episode",
    "EvClipError",
    "FormatError",
    "FrozenEncoderSet",
    "MaskGenerator",
    "PromptModel",
    "TrainConfig",
    "VerificationError",
    "Video",
    "VideoClip",
    "VideoPromptClassifier",
    "aggregate_video",
    "apply_mask",
    "baseline_video_feature",
    "class_centroid",
    "consistency_loss",
    "contrastive_cross_entropy",
    "cosine_distance",
    "cosine_similarity",
    "evaluate",
    "forward_batch",
    "global_pool",
    "grad_check",
    "load_embedding_archive",
    "make_episode",
    "make_toy_encoders",
    "minmax_scale",
    "pairwise_mean_distance",
    "pixel_softmax",
    "total_loss",
    "train",
    "write_embedding_archive",
]

__version__ = "0.1.0"
