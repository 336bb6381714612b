"""Embedding-space primitives: cosine similarity/distance, centroids, pairwise means.

All accumulation happens in float64 regardless of input dtype, and zero-norm
vectors are rejected rather than silently mapped to zero similarity.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .exceptions import DomainError
from .validation import as_embedding, check_same_dim


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two nonzero vectors, in [-1, 1]."""
    va = as_embedding(a, "a")
    vb = as_embedding(b, "b")
    check_same_dim(va, vb)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0:
        raise DomainError("zero-norm embedding in argument 'a'")
    if nb == 0.0:
        raise DomainError("zero-norm embedding in argument 'b'")
    return float(np.dot(va, vb) / (na * nb))


def cosine_distance(a, b) -> float:
    """1 - cosine_similarity, in [0, 2]."""
    return 1.0 - cosine_similarity(a, b)


def class_centroid(members: Sequence) -> np.ndarray:
    """Componentwise mean of a nonempty list of same-dimension embeddings."""
    if len(members) == 0:
        raise DomainError("cannot compute the centroid of an empty class")
    vectors = [as_embedding(m, f"members[{i}]") for i, m in enumerate(members)]
    dim = vectors[0].shape[0]
    for i, v in enumerate(vectors):
        if v.shape[0] != dim:
            raise DomainError(
                f"members[{i}] has dimension {v.shape[0]}, expected {dim}"
            )
    return np.mean(np.stack(vectors, axis=0), axis=0)


def pairwise_mean_distance(points: Sequence) -> float:
    """Mean cosine distance over all unordered pairs of at least two points."""
    m = len(points)
    if m < 2:
        raise DomainError(f"pairwise mean distance needs at least 2 points, got {m}")
    vectors = [as_embedding(p, f"points[{i}]") for i, p in enumerate(points)]
    total = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            total += cosine_distance(vectors[i], vectors[j])
    return 2.0 * total / (m * (m - 1))
