"""Training objective: temperature-scaled contrastive cross-entropy over
video/text cosine similarities, a log-penalty on inter-frame agreement, and
their weighted combination."""

from __future__ import annotations

import torch

from .exceptions import ConfigurationError, DomainError

CONSISTENCY_EPS = 1e-6


def _normalize(x: torch.Tensor, what: str) -> torch.Tensor:
    norms = x.norm(dim=-1, keepdim=True)
    if (norms == 0).any():
        raise DomainError(f"zero-norm embedding among {what}")
    return x / norms


def cosine_logits(video_feats: torch.Tensor, text_feats: torch.Tensor) -> torch.Tensor:
    """(N, d) x (M, d) -> (N, M) matrix of cosine similarities."""
    v = _normalize(video_feats, "video features")
    t = _normalize(text_feats, "text features")
    return v @ t.T


def cross_entropy_from_logits(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean -log softmax over the last axis, max-subtracted for stability."""
    labels = torch.as_tensor(labels, dtype=torch.long)
    m = logits.shape[-1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= m):
        raise DomainError(f"labels must lie in [0, {m})")
    shifted = logits - logits.amax(dim=-1, keepdim=True)
    log_prob = shifted - shifted.exp().sum(dim=-1, keepdim=True).log()
    picked = log_prob.gather(-1, labels.view(-1, 1)).squeeze(-1)
    return -picked.mean()


def contrastive_cross_entropy(
    video_feats: torch.Tensor,
    text_feats: torch.Tensor,
    labels: torch.Tensor,
    temperature: float,
) -> torch.Tensor:
    """Mean -log softmax over classes of cos(v_i, t_c) / temperature.

    Normalization runs over the M classes (not the batch).
    """
    if temperature <= 0:
        raise ConfigurationError(f"temperature must be > 0, got {temperature}")
    logits = cosine_logits(video_feats, text_feats) / temperature
    return cross_entropy_from_logits(logits, labels)


def pairwise_cosine_matrix(frame_feats: torch.Tensor) -> torch.Tensor:
    """(..., T, d) -> (..., T, T) cosine similarities between frames."""
    f = _normalize(frame_feats, "frame features")
    return f @ f.transpose(-2, -1)


def frame_similarity_matrix(frame_feats: torch.Tensor) -> torch.Tensor:
    """Cosines rescaled into [0, 1]: s = (cos + 1) / 2. Symmetric, unit diagonal."""
    return 0.5 * (pairwise_cosine_matrix(frame_feats) + 1.0)


def consistency_loss(frame_feats: torch.Tensor, eps: float = CONSISTENCY_EPS) -> torch.Tensor:
    """Log-scale penalty on rescaled inter-frame similarities of one clip.

    frame_feats: (T, d) with T >= 2.  Similarities are clamped at ``eps``
    inside the log so antipodal frames give a bounded loss.
    """
    if frame_feats.ndim != 2:
        raise DomainError(f"expected (T, d) frame features, got {tuple(frame_feats.shape)}")
    t = frame_feats.shape[0]
    if t < 2:
        raise DomainError(f"consistency loss needs at least 2 frames, got {t}")
    s = frame_similarity_matrix(frame_feats)
    iu, ju = torch.triu_indices(t, t, offset=1)
    logs = torch.log(torch.clamp(s[iu, ju], min=eps))
    return -2.0 / (t * (t - 1)) * logs.sum()


def batch_consistency_loss(frame_feats: torch.Tensor, eps: float = CONSISTENCY_EPS) -> torch.Tensor:
    """Mean of per-clip consistency losses over a (B, T, d) batch."""
    if frame_feats.ndim != 3:
        raise DomainError(f"expected (B, T, d) batch, got {tuple(frame_feats.shape)}")
    b, t, _ = frame_feats.shape
    if t < 2:
        raise DomainError(f"consistency loss needs at least 2 frames, got {t}")
    s = frame_similarity_matrix(frame_feats)
    iu, ju = torch.triu_indices(t, t, offset=1)
    logs = torch.log(torch.clamp(s[:, iu, ju], min=eps))
    return (-2.0 / (t * (t - 1)) * logs.sum(dim=-1)).mean()


def total_loss(ce: torch.Tensor, consistency: torch.Tensor, weight: float) -> torch.Tensor:
    """ce + weight * consistency, with weight >= 0."""
    if weight < 0:
        raise ConfigurationError(f"consistency weight must be >= 0, got {weight}")
    return ce + weight * consistency
