"""Few-shot training and evaluation of the prompt generators.

Only the mask and context generators train; encoders stay frozen.  Runs are
deterministic given the config seed: one RNG stream drives frame sampling and
crops in a fixed per-video order, and parameter init is seeded.  The whole
episode forms a single batch while it fits; larger episodes fall back to
seeded mini-batches.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch
from torch import nn

from .context import ContextGenerator, aggregate_video, baseline_video_feature, global_pool
from .encoders import EncoderDims, FrozenEncoderSet
from .exceptions import ConfigurationError, DomainError, VerificationError
from .losses import batch_consistency_loss, contrastive_cross_entropy, cosine_logits, total_loss
from .mask import MaskGenerator, apply_mask
from .sampling import preprocess, sample_frames
from .validation import as_frames

FULL_BATCH_LIMIT = 64
GRAD_TOLERANCE = 1e-4
FD_STEP = 1e-3


@dataclass
class TrainConfig:
    shots: int = 4
    frames: int = 8
    clip_window: int = 32
    temperature: float = 0.01
    consistency_weight: float = 0.1
    epochs: int = 200
    learning_rate: float = 5e-4
    seed: int = 0
    batch_size: int = 32
    resize_height: int = 40
    resize_width: int = 52
    crop_height: int = 32
    crop_width: int = 32
    embed_dim: int = 32
    latent_channels: int = 16
    latent_height: int = 4
    latent_width: int = 4
    encoder_seed: int = 7
    ablate_mask: bool = False
    ablate_context: bool = False
    save_optimizer: bool = False

    def validate(self) -> None:
        if self.shots < 1:
            raise ConfigurationError(f"shots must be >= 1, got {self.shots}")
        if self.frames < 2 or self.frames % 2:
            raise ConfigurationError(f"frames must be even and >= 2, got {self.frames}")
        if self.clip_window < self.frames:
            raise ConfigurationError(
                f"clip_window {self.clip_window} must be >= frames {self.frames}"
            )
        if self.temperature <= 0:
            raise ConfigurationError(f"temperature must be > 0, got {self.temperature}")
        if self.consistency_weight < 0:
            raise ConfigurationError(
                f"consistency_weight must be >= 0, got {self.consistency_weight}"
            )
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        self.encoder_dims()  # raises on inconsistent dims

    def encoder_dims(self, channels: int = 3) -> EncoderDims:
        return EncoderDims(
            embed_dim=self.embed_dim,
            latent_channels=self.latent_channels,
            latent_height=self.latent_height,
            latent_width=self.latent_width,
            frame_height=self.crop_height,
            frame_width=self.crop_width,
            channels=channels,
        )


@dataclass
class Video:
    """A full source video from which clips are sampled each epoch."""

    id: str
    label: int
    frames: np.ndarray  # (F, C, H0, W0) in [0, 1]

    def __post_init__(self):
        as_frames(self.frames, f"video '{self.id}'")


@dataclass
class Episode:
    """Exactly ``shots`` training videos per class plus a disjoint eval set."""

    train_videos: list[Video]
    eval_videos: list[Video]
    class_names: list[str]

    def validate(self, shots: int) -> None:
        m = len(self.class_names)
        counts = np.zeros(m, dtype=int)
        for v in self.train_videos:
            if not 0 <= v.label < m:
                raise DomainError(f"video '{v.id}' has label {v.label} outside [0, {m})")
            counts[v.label] += 1
        if not np.all(counts == shots):
            raise DomainError(
                f"episode needs exactly {shots} training videos per class, "
                f"got per-class counts {counts.tolist()}"
            )
        train_ids = {v.id for v in self.train_videos}
        overlap = train_ids & {v.id for v in self.eval_videos}
        if overlap:
            raise DomainError(f"train/eval id overlap: {sorted(overlap)[:5]}")


def make_episode(
    videos: list[Video], class_names: list[str], shots: int, seed: int
) -> Episode:
    """Seeded per-class split into exactly ``shots`` train videos and the rest."""
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[Video]] = {}
    for v in sorted(videos, key=lambda v: v.id):
        by_class.setdefault(v.label, []).append(v)
    train, eval_ = [], []
    for label in range(len(class_names)):
        members = by_class.get(label, [])
        if len(members) < shots:
            raise DomainError(
                f"class {label} has only {len(members)} videos, need >= {shots}"
            )
        order = rng.permutation(len(members))
        picks = set(order[:shots].tolist())
        for i, v in enumerate(members):
            (train if i in picks else eval_).append(v)
    episode = Episode(train, eval_, class_names)
    episode.validate(shots)
    return episode


class PromptModel(nn.Module):
    """Container for the two trainable prompt generators."""

    def __init__(self, config: TrainConfig):
        super().__init__()
        self.mask_generator = MaskGenerator(
            latent_channels=config.latent_channels,
            latent_time=config.frames // 2,
            latent_height=config.latent_height,
            latent_width=config.latent_width,
            frame_height=config.crop_height,
            frame_width=config.crop_width,
            seed=config.seed,
        )
        self.context_generator = ContextGenerator(
            latent_channels=config.latent_channels,
            embed_dim=config.embed_dim,
            seed=config.seed + 1,
        )


@dataclass
class ForwardResult:
    video_features: torch.Tensor  # (B, d)
    frame_features: torch.Tensor  # (B, T, d)
    mask: torch.Tensor  # (B, H, W)
    context: torch.Tensor  # (B, d)


def forward_batch(
    model: PromptModel,
    encoders: FrozenEncoderSet,
    frames: torch.Tensor,
    ablate_mask: bool = False,
    ablate_context: bool = False,
) -> ForwardResult:
    """Latent -> mask -> reweighted frames -> frame embeddings -> video feature.

    Ablating the mask substitutes all-ones; ablating the context averages the
    frame embeddings with divisor T (the prompt-free aggregation).
    """
    if frames.ndim != 5:
        raise DomainError(f"expected (B, T, C, H, W) frames, got {tuple(frames.shape)}")
    b = frames.shape[0]
    z = encoders.encode_video_latent(frames)
    if ablate_mask:
        mask = torch.ones(
            (b, frames.shape[-2], frames.shape[-1]), dtype=torch.float64
        )
    else:
        mask = model.mask_generator(z)
    masked = apply_mask(frames, mask)
    frame_feats = encoders.encode_frames(masked)
    if ablate_context:
        context = torch.zeros((b, encoders.dims.embed_dim), dtype=torch.float64)
        video_feats = baseline_video_feature(frame_feats)
    else:
        context = model.context_generator(global_pool(z))
        video_feats = aggregate_video(frame_feats, context)
    return ForwardResult(video_feats, frame_feats, mask, context)


def vanilla_video_features(encoders: FrozenEncoderSet, frames: torch.Tensor) -> torch.Tensor:
    """Prompt-free pipeline: mean of raw frame embeddings."""
    return baseline_video_feature(encoders.encode_frames(frames))


def prepare_clip(
    video: Video, config: TrainConfig, mode: str, rng: np.random.Generator | None
) -> tuple[np.ndarray, bool]:
    sampled, padded = sample_frames(
        video.frames, config.frames, config.clip_window, mode, rng
    )
    processed = preprocess(
        sampled,
        (config.resize_height, config.resize_width),
        (config.crop_height, config.crop_width),
        mode,
        rng,
    )
    return processed, padded


def prepare_batch(
    videos: list[Video], config: TrainConfig, mode: str, rng: np.random.Generator | None
) -> tuple[torch.Tensor, torch.Tensor, list[str]]:
    """Sample and preprocess clips in video order; returns padded video ids."""
    clips, padded_ids = [], []
    for video in videos:
        clip, padded = prepare_clip(video, config, mode, rng)
        clips.append(clip)
        if padded:
            padded_ids.append(video.id)
    frames = torch.as_tensor(np.stack(clips, axis=0), dtype=torch.float64)
    labels = torch.as_tensor([v.label for v in videos], dtype=torch.long)
    return frames, labels, padded_ids


@dataclass
class TrainResult:
    model: PromptModel
    log_lines: list[str] = field(default_factory=list)
    optimizer_state: dict | None = None


class TrainingDiverged(VerificationError):
    """Loss became non-finite; carries the last finite model state."""

    def __init__(self, message: str, result: TrainResult):
        super().__init__(message)
        self.result = result


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    if n <= FULL_BATCH_LIMIT:
        return [np.arange(n)]
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def train(
    config: TrainConfig, episode: Episode, encoders: FrozenEncoderSet
) -> TrainResult:
    """Optimize the prompt generators with Adam on the combined objective.

    Returns the trained model plus one log line per epoch in the format
    ``epoch=<n> loss=<f> ce=<f> cons=<f> lr=<f>``.
    """
    config.validate()
    episode.validate(config.shots)
    rng = np.random.default_rng(config.seed)
    model = PromptModel(config)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    text_feats = encoders.encode_texts(episode.class_names)

    log_lines: list[str] = []
    flagged: set[str] = set()
    last_finite = {k: v.detach().clone() for k, v in model.state_dict().items()}
    videos = episode.train_videos

    for epoch in range(config.epochs):
        batches = _epoch_batches(len(videos), config.batch_size, rng)
        epoch_loss = epoch_ce = epoch_cons = 0.0
        seen = 0
        for batch_idx in batches:
            batch_videos = [videos[i] for i in batch_idx]
            frames, labels, padded = prepare_batch(batch_videos, config, "train", rng)
            for vid in padded:
                if vid not in flagged:
                    flagged.add(vid)
                    log_lines.append(f"# loop_padded video={vid}")
            out = forward_batch(
                model, encoders, frames, config.ablate_mask, config.ablate_context
            )
            ce = contrastive_cross_entropy(
                out.video_features, text_feats, labels, config.temperature
            )
            cons = batch_consistency_loss(out.frame_features)
            loss = total_loss(ce, cons, config.consistency_weight)
            if not torch.isfinite(loss):
                model.load_state_dict(last_finite)
                result = TrainResult(model, log_lines)
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} "
                    f"(ce={float(ce.detach())}, cons={float(cons.detach())}); "
                    "restored the last finite parameter state",
                    result,
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            n = len(batch_idx)
            seen += n
            epoch_loss += float(loss.detach()) * n
            epoch_ce += float(ce.detach()) * n
            epoch_cons += float(cons.detach()) * n
        last_finite = {k: v.detach().clone() for k, v in model.state_dict().items()}
        log_lines.append(
            f"epoch={epoch} loss={epoch_loss / seen:.12g} ce={epoch_ce / seen:.12g} "
            f"cons={epoch_cons / seen:.12g} lr={config.learning_rate:.12g}"
        )

    state = optimizer.state_dict() if config.save_optimizer else None
    return TrainResult(model, log_lines, state)


@dataclass
class EvalResult:
    top1: float
    top5: float
    per_class: np.ndarray
    predictions: np.ndarray
    video_ids: list[str]


def evaluate(
    model: PromptModel,
    encoders: FrozenEncoderSet,
    videos: list[Video],
    class_names: list[str],
    config: TrainConfig,
    ablate_mask: bool = False,
    ablate_context: bool = False,
) -> EvalResult:
    """Center-clipped, center-cropped evaluation; ties break to the lowest class."""
    if not videos:
        raise DomainError("evaluation set is empty")
    text_feats = encoders.encode_texts(class_names)
    frames, labels, _ = prepare_batch(videos, config, "test", None)
    with torch.no_grad():
        out = forward_batch(model, encoders, frames, ablate_mask, ablate_context)
        cos = cosine_logits(out.video_features, text_feats).numpy()
    labels = labels.numpy()
    predictions = np.argmax(cos, axis=1)
    order = np.argsort(-cos, axis=1, kind="stable")
    top5_hits = (order[:, : min(5, cos.shape[1])] == labels[:, None]).any(axis=1)
    m = len(class_names)
    per_class = np.zeros(m, dtype=np.float64)
    for c in range(m):
        members = labels == c
        if members.any():
            per_class[c] = float(np.mean(predictions[members] == c))
        else:
            per_class[c] = np.nan
    return EvalResult(
        top1=float(np.mean(predictions == labels)),
        top5=float(np.mean(top5_hits)),
        per_class=per_class,
        predictions=predictions,
        video_ids=[v.id for v in videos],
    )


@dataclass
class GroupGradReport:
    name: str
    size: int
    grad_norm: float
    max_rel_err: float


@dataclass
class GradCheckReport:
    groups: list[GroupGradReport]
    tolerance: float = GRAD_TOLERANCE

    @property
    def max_rel_err(self) -> float:
        return max(g.max_rel_err for g in self.groups)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance

    def lines(self) -> list[str]:
        out = [
            f"group={g.name} size={g.size} grad_norm={g.grad_norm:.6g} "
            f"rel_err={g.max_rel_err:.6g}"
            for g in self.groups
        ]
        out.append(f"max_rel_err={self.max_rel_err:.6g} tolerance={self.tolerance:g}")
        out.append("result=PASS" if self.passed else "result=FAIL")
        return out


def gradcheck_config(seed: int = 0) -> TrainConfig:
    """Tiny double-precision configuration used by the gradient checker."""
    return TrainConfig(
        shots=1,
        frames=4,
        clip_window=4,
        temperature=0.05,
        consistency_weight=0.5,
        epochs=0,
        seed=seed,
        resize_height=32,
        resize_width=32,
        crop_height=32,
        crop_width=32,
        embed_dim=16,
        latent_channels=8,
        latent_height=4,
        latent_width=4,
        encoder_seed=seed + 100,
    )


def grad_check(seed: int = 0, coords_per_group: int = 5) -> GradCheckReport:
    """Compare autograd gradients with central finite differences (step 1e-3).

    Runs the full pipeline (latent -> mask -> reweighted frames -> embeddings
    -> context -> combined loss) on random clips.  Per named parameter: one
    seeded random-direction derivative plus a sample of per-coordinate
    differences.  Failures are reported in the result, not raised.
    """
    from .encoders import make_toy_encoders  # local import to avoid cycle

    config = gradcheck_config(seed)
    rng = np.random.default_rng(seed)
    encoders = make_toy_encoders(config.encoder_seed, config.encoder_dims())
    model = PromptModel(config)
    batch = 2
    frames = torch.as_tensor(
        rng.uniform(0.0, 1.0, size=(batch, config.frames, 3, 32, 32)), dtype=torch.float64
    )
    labels = torch.as_tensor(rng.integers(0, 2, size=batch), dtype=torch.long)
    text_feats = encoders.encode_texts(["first probe action", "second probe action"])

    def compute_loss() -> torch.Tensor:
        out = forward_batch(model, encoders, frames)
        ce = contrastive_cross_entropy(
            out.video_features, text_feats, labels, config.temperature
        )
        cons = batch_consistency_loss(out.frame_features)
        return total_loss(ce, cons, config.consistency_weight)

    model.zero_grad()
    compute_loss().backward()

    def loss_value() -> float:
        with torch.no_grad():
            return float(compute_loss())

    def rel_err(a: float, b: float) -> float:
        scale = max(abs(a), abs(b))
        if scale < 1e-12:
            return 0.0
        return abs(a - b) / scale

    groups = []
    for name, param in model.named_parameters():
        grad = param.grad
        if grad is None:  # pragma: no cover - every group is reachable
            grad = torch.zeros_like(param)
        flat = param.data.view(-1)
        gflat = grad.view(-1)
        worst = 0.0

        direction = torch.as_tensor(
            rng.standard_normal(flat.numel()), dtype=torch.float64
        )
        direction /= direction.norm()
        analytic_dir = float((gflat * direction).sum())
        flat += FD_STEP * direction
        f_plus = loss_value()
        flat -= 2 * FD_STEP * direction
        f_minus = loss_value()
        flat += FD_STEP * direction
        worst = max(worst, rel_err(analytic_dir, (f_plus - f_minus) / (2 * FD_STEP)))

        n_coords = min(coords_per_group, flat.numel())
        picks = rng.choice(flat.numel(), size=n_coords, replace=False)
        for idx in picks:
            idx = int(idx)
            original = float(flat[idx])
            flat[idx] = original + FD_STEP
            f_plus = loss_value()
            flat[idx] = original - FD_STEP
            f_minus = loss_value()
            flat[idx] = original
            worst = max(worst, rel_err(float(gflat[idx]), (f_plus - f_minus) / (2 * FD_STEP)))

        groups.append(
            GroupGradReport(
                name=name,
                size=flat.numel(),
                grad_norm=float(gflat.norm()),
                max_rel_err=worst,
            )
        )
    return GradCheckReport(groups)


def config_with_overrides(config: TrainConfig, **overrides) -> TrainConfig:
    return replace(config, **overrides)
