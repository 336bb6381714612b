"""scikit-learn style estimator wrapping the few-shot prompt tuner.

``fit`` receives one balanced support set (the same number of videos per
class) and trains the mask/context generators against frozen toy encoders;
``predict`` classifies by cosine similarity against the class text embeddings.
Videos are (F, C, H, W) float arrays in [0, 1].
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin

from .encoders import make_toy_encoders
from .exceptions import DomainError
from .losses import cosine_logits
from .training import (
    Episode,
    EvalResult,
    TrainConfig,
    Video,
    evaluate,
    forward_batch,
    prepare_batch,
    train,
)
from .validation import as_frames


class VideoPromptClassifier(BaseEstimator, ClassifierMixin):
    """Few-shot video action classifier driven by mask and context prompts.

    Parameters mirror the training configuration; ``use_mask`` and
    ``use_context`` toggle the corresponding prompt (both off reproduces the
    prompt-free frame-mean pipeline).
    """

    def __init__(
        self,
        frames=8,
        clip_window=32,
        temperature=0.01,
        consistency_weight=0.1,
        epochs=200,
        learning_rate=5e-4,
        seed=0,
        batch_size=32,
        resize_height=40,
        resize_width=52,
        crop_height=32,
        crop_width=32,
        embed_dim=32,
        latent_channels=16,
        latent_height=4,
        latent_width=4,
        encoder_seed=7,
        use_mask=True,
        use_context=True,
    ):
        self.frames = frames
        self.clip_window = clip_window
        self.temperature = temperature
        self.consistency_weight = consistency_weight
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.seed = seed
        self.batch_size = batch_size
        self.resize_height = resize_height
        self.resize_width = resize_width
        self.crop_height = crop_height
        self.crop_width = crop_width
        self.embed_dim = embed_dim
        self.latent_channels = latent_channels
        self.latent_height = latent_height
        self.latent_width = latent_width
        self.encoder_seed = encoder_seed
        self.use_mask = use_mask
        self.use_context = use_context

    def _train_config(self, shots: int) -> TrainConfig:
        return TrainConfig(
            shots=shots,
            frames=self.frames,
            clip_window=self.clip_window,
            temperature=self.temperature,
            consistency_weight=self.consistency_weight,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            seed=self.seed,
            batch_size=self.batch_size,
            resize_height=self.resize_height,
            resize_width=self.resize_width,
            crop_height=self.crop_height,
            crop_width=self.crop_width,
            embed_dim=self.embed_dim,
            latent_channels=self.latent_channels,
            latent_height=self.latent_height,
            latent_width=self.latent_width,
            encoder_seed=self.encoder_seed,
            ablate_mask=not self.use_mask,
            ablate_context=not self.use_context,
        )

    def _as_videos(self, X, labels=None, prefix="video") -> list[Video]:
        videos = []
        for i, item in enumerate(X):
            if isinstance(item, Video):
                videos.append(item)
                continue
            frames = as_frames(item, f"{prefix}[{i}]")
            label = int(labels[i]) if labels is not None else 0
            videos.append(Video(id=f"{prefix}_{i:04d}", label=label, frames=frames))
        return videos

    def fit(self, X, y, class_names=None):
        """Train the prompts on a balanced support set.

        X: sequence of (F, C, H, W) float videos; y: class labels;
        class_names: optional label strings fed to the text encoder.
        """
        y = np.asarray(y)
        if len(X) != len(y):
            raise DomainError(f"got {len(X)} videos but {len(y)} labels")
        self.classes_, encoded = np.unique(y, return_inverse=True)
        counts = np.bincount(encoded, minlength=len(self.classes_))
        if len(set(counts.tolist())) != 1:
            raise DomainError(
                f"support set must be balanced, got per-class counts {counts.tolist()}"
            )
        shots = int(counts[0])
        if class_names is None:
            class_names = [f"action {label}" for label in self.classes_]
        if len(class_names) != len(self.classes_):
            raise DomainError(
                f"{len(class_names)} class names for {len(self.classes_)} classes"
            )
        self.class_names_ = list(class_names)

        videos = self._as_videos(X, encoded, prefix="fit")
        config = self._train_config(shots)
        config.validate()
        channels = videos[0].frames.shape[1]
        self.encoders_ = make_toy_encoders(self.encoder_seed, config.encoder_dims(channels))
        episode = Episode(videos, [], self.class_names_)
        result = train(config, episode, self.encoders_)
        self.model_ = result.model
        self.train_log_ = result.log_lines
        self.config_ = config
        return self

    def decision_function(self, X) -> np.ndarray:
        """Cosine similarity of each video feature against every class embedding."""
        if not hasattr(self, "model_"):
            raise DomainError("estimator is not fitted; call fit first")
        videos = self._as_videos(X, prefix="predict")
        frames, _, _ = prepare_batch(videos, self.config_, "test", None)
        with torch.no_grad():
            out = forward_batch(
                self.model_,
                self.encoders_,
                frames,
                ablate_mask=not self.use_mask,
                ablate_context=not self.use_context,
            )
            text = self.encoders_.encode_texts(self.class_names_)
            return cosine_logits(out.video_features, text).numpy()

    def predict(self, X) -> np.ndarray:
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]

    def evaluate_videos(self, videos: list[Video]) -> EvalResult:
        """Top-1/top-5/per-class accuracy on labeled Video objects."""
        if not hasattr(self, "model_"):
            raise DomainError("estimator is not fitted; call fit first")
        return evaluate(
            self.model_,
            self.encoders_,
            videos,
            self.class_names_,
            self.config_,
            ablate_mask=not self.use_mask,
            ablate_context=not self.use_context,
        )
