"""Dataset-level domain-shift metrics over embedding archives.

Four cosine-distance statistics characterize a dataset: mean video-to-label
distance (vtm), mean pairwise distance between class visual centroids (iavd),
mean pairwise distance between class text embeddings (iasd), and mean distance
between adjacent frame embeddings (md).  Video embeddings are always the plain
frame mean; prompted features are deliberately excluded here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .archive import EmbeddingArchive
from .embedding import class_centroid, cosine_distance, pairwise_mean_distance
from .exceptions import DomainError, FormatError

METRIC_NAMES = ("vtm", "iavd", "iasd", "md")


@dataclass
class EmbeddedDataset:
    dataset_id: str
    video_ids: list[str]
    labels: np.ndarray  # (N,)
    frame_embeddings: np.ndarray  # (N, T, d) float64
    text_embeddings: np.ndarray  # (M, d) float64

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.frame_embeddings = np.asarray(self.frame_embeddings, dtype=np.float64)
        self.text_embeddings = np.asarray(self.text_embeddings, dtype=np.float64)
        if self.frame_embeddings.ndim != 3:
            raise DomainError(
                f"frame embeddings must be (N, T, d), got {self.frame_embeddings.shape}"
            )
        if len(self.video_ids) != self.frame_embeddings.shape[0]:
            raise DomainError("video id count does not match embeddings")
        if self.labels.shape != (self.frame_embeddings.shape[0],):
            raise DomainError("label count does not match embeddings")

    @property
    def num_videos(self) -> int:
        return self.frame_embeddings.shape[0]

    @property
    def num_classes(self) -> int:
        return self.text_embeddings.shape[0]

    @property
    def frames_per_video(self) -> int:
        return self.frame_embeddings.shape[1]

    def video_embedding(self, index: int) -> np.ndarray:
        """Plain mean of the video's frame embeddings."""
        return self.frame_embeddings[index].mean(axis=0)

    @classmethod
    def from_archive(cls, archive: EmbeddingArchive, dataset_id: str) -> "EmbeddedDataset":
        return cls(
            dataset_id=dataset_id,
            video_ids=list(archive.video_ids),
            labels=archive.labels,
            frame_embeddings=archive.frame_embeddings.astype(np.float64),
            text_embeddings=archive.text_embeddings.astype(np.float64),
        )


def visual_textual_misalignment(ds: EmbeddedDataset) -> float:
    """Mean cosine distance between each video embedding and its label embedding."""
    if ds.num_videos < 1:
        raise DomainError("visual-textual misalignment needs at least one video")
    total = 0.0
    for i in range(ds.num_videos):
        total += cosine_distance(ds.video_embedding(i), ds.text_embeddings[ds.labels[i]])
    return total / ds.num_videos


def inter_action_visual_distance(ds: EmbeddedDataset) -> float:
    """Mean pairwise cosine distance between per-class visual centroids."""
    if ds.num_classes < 2:
        raise DomainError(
            f"inter-action visual distance needs >= 2 classes, got {ds.num_classes}"
        )
    centroids = []
    for c in range(ds.num_classes):
        members = [ds.video_embedding(i) for i in range(ds.num_videos) if ds.labels[i] == c]
        if not members:
            raise DomainError(f"class {c} has no videos; cannot form its centroid")
        centroids.append(class_centroid(members))
    return pairwise_mean_distance(centroids)


def inter_action_semantic_distance(ds: EmbeddedDataset) -> float:
    """Mean pairwise cosine distance between class text embeddings."""
    if ds.num_classes < 2:
        raise DomainError(
            f"inter-action semantic distance needs >= 2 classes, got {ds.num_classes}"
        )
    return pairwise_mean_distance(list(ds.text_embeddings))


def motion_dynamics(ds: EmbeddedDataset) -> float:
    """Mean cosine distance between temporally adjacent frame embeddings."""
    t = ds.frames_per_video
    if t < 2:
        raise DomainError(f"motion dynamics needs >= 2 frames per video, got {t}")
    if ds.num_videos < 1:
        raise DomainError("motion dynamics needs at least one video")
    total = 0.0
    for i in range(ds.num_videos):
        for j in range(1, t):
            total += cosine_distance(ds.frame_embeddings[i, j], ds.frame_embeddings[i, j - 1])
    return total / (ds.num_videos * (t - 1))


_METRIC_FNS = {
    "vtm": visual_textual_misalignment,
    "iavd": inter_action_visual_distance,
    "iasd": inter_action_semantic_distance,
    "md": motion_dynamics,
}


@dataclass
class DomainShiftReport:
    dataset_id: str
    num_videos: int
    num_classes: int
    frames_per_video: int
    metrics: dict[str, float | None] = field(default_factory=dict)
    reasons: dict[str, str] = field(default_factory=dict)

    def to_lines(self) -> list[str]:
        lines = [
            f"dataset = {self.dataset_id}",
            f"videos = {self.num_videos}",
            f"classes = {self.num_classes}",
            f"frames = {self.frames_per_video}",
        ]
        for name in METRIC_NAMES:
            value = self.metrics.get(name)
            if value is None:
                lines.append(f"{name} = null")
                lines.append(f"{name}_reason = {self.reasons.get(name, 'unavailable')}")
            else:
                lines.append(f"{name} = {value!r}")
        return lines


def probe(ds: EmbeddedDataset) -> DomainShiftReport:
    """All four metrics, with explicit nulls where a precondition fails."""
    report = DomainShiftReport(
        dataset_id=ds.dataset_id,
        num_videos=ds.num_videos,
        num_classes=ds.num_classes,
        frames_per_video=ds.frames_per_video,
    )
    for name, fn in _METRIC_FNS.items():
        try:
            report.metrics[name] = fn(ds)
        except DomainError as exc:
            report.metrics[name] = None
            report.reasons[name] = str(exc)
    return report


def parse_report_lines(lines: list[str]) -> DomainShiftReport:
    values: dict[str, str] = {}
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    try:
        report = DomainShiftReport(
            dataset_id=values["dataset"],
            num_videos=int(values["videos"]),
            num_classes=int(values["classes"]),
            frames_per_video=int(values["frames"]),
        )
        for name in METRIC_NAMES:
            raw = values[name]
            if raw == "null":
                report.metrics[name] = None
                report.reasons[name] = values.get(f"{name}_reason", "unavailable")
            else:
                report.metrics[name] = float(raw)
    except KeyError as exc:
        raise FormatError(f"domain-shift report is missing field {exc}") from exc
    return report


def rank_correlations(
    reports: list[DomainShiftReport], accuracies: dict[str, float]
) -> dict[str, float | None]:
    """Spearman rank correlation of each metric against zero-shot accuracy.

    Datasets missing a metric or an accuracy entry are skipped for that
    metric; fewer than two usable datasets (or constant inputs) give None.
    """
    out: dict[str, float | None] = {}
    for name in METRIC_NAMES:
        xs, ys = [], []
        for report in reports:
            value = report.metrics.get(name)
            acc = accuracies.get(report.dataset_id)
            if value is not None and acc is not None:
                xs.append(value)
                ys.append(acc)
        if len(xs) < 2:
            out[name] = None
            continue
        rho = stats.spearmanr(xs, ys).statistic
        out[name] = None if np.isnan(rho) else float(rho)
    return out
