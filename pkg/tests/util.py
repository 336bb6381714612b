"""Shared helpers for the test suite: finite differences and random structures."""

import numpy as np
import torch

FD_STEP = 1e-3


def fd_group_errors(loss_fn, module: torch.nn.Module, rng: np.random.Generator,
                    coords: int = 4) -> dict[str, float]:
    """Max relative error between autograd and central differences per parameter.

    One random-direction derivative plus ``coords`` sampled coordinates per
    named parameter tensor.
    """
    module.zero_grad()
    loss_fn().backward()

    def value() -> float:
        with torch.no_grad():
            return float(loss_fn())

    def rel(a: float, b: float) -> float:
        scale = max(abs(a), abs(b))
        return 0.0 if scale < 1e-12 else abs(a - b) / scale

    errors: dict[str, float] = {}
    for name, param in module.named_parameters():
        grad = param.grad if param.grad is not None else torch.zeros_like(param)
        flat, gflat = param.data.view(-1), grad.view(-1)
        worst = 0.0

        direction = torch.as_tensor(rng.standard_normal(flat.numel()), dtype=torch.float64)
        direction /= direction.norm()
        analytic = float((gflat * direction).sum())
        flat += FD_STEP * direction
        f_plus = value()
        flat -= 2 * FD_STEP * direction
        f_minus = value()
        flat += FD_STEP * direction
        worst = max(worst, rel(analytic, (f_plus - f_minus) / (2 * FD_STEP)))

        for idx in rng.choice(flat.numel(), size=min(coords, flat.numel()), replace=False):
            idx = int(idx)
            keep = float(flat[idx])
            flat[idx] = keep + FD_STEP
            f_plus = value()
            flat[idx] = keep - FD_STEP
            f_minus = value()
            flat[idx] = keep
            worst = max(worst, rel(float(gflat[idx]), (f_plus - f_minus) / (2 * FD_STEP)))
        errors[name] = worst
    return errors


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def random_archive(rng: np.random.Generator):
    """A random but structurally valid embedding archive."""
    from evclip.archive import EmbeddingArchive

    n = int(rng.integers(1, 5))
    m = int(rng.integers(1, 4))
    t = int(rng.integers(1, 5))
    d = int(rng.integers(1, 7))
    d_z = int(rng.integers(1, 4))
    t_half = int(rng.integers(1, 3))
    h = int(rng.integers(1, 4))
    w = int(rng.integers(1, 4))
    return EmbeddingArchive(
        video_ids=[f"clip/{i}-é{rng.integers(0, 999)}" for i in range(n)],
        labels=rng.integers(0, m, size=n),
        class_names=[f"motion {j} →" for j in range(m)],
        text_embeddings=rng.standard_normal((m, d)).astype(np.float32),
        frame_embeddings=rng.standard_normal((n, t, d)).astype(np.float32),
        latents=rng.standard_normal((n, d_z, t_half, h, w)).astype(np.float32),
    )
