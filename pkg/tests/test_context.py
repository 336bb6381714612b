"""Context prompt: pooling, projection, and the T+1 aggregation identity."""

import numpy as np
import pytest
import torch

from evclip.context import (
    ContextGenerator,
    aggregate_video,
    baseline_video_feature,
    global_pool,
)
from evclip.exceptions import DomainError
from util import fd_group_errors


class TestGlobalPool:
    def test_constant(self):
        z = torch.full((6, 2, 3, 3), 3.0, dtype=torch.float64)
        np.testing.assert_allclose(global_pool(z).numpy(), 3.0, atol=1e-15)

    def test_matches_loop_mean(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal((4, 2, 3, 5))
        out = global_pool(torch.as_tensor(z)).numpy()
        for c in range(4):
            assert out[c] == pytest.approx(z[c].mean(), abs=1e-12)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(1)
        z = rng.standard_normal((3, 2, 4, 4))
        flat = z.reshape(3, -1)
        shuffled = flat[:, rng.permutation(flat.shape[1])].reshape(3, 2, 4, 4)
        np.testing.assert_allclose(
            global_pool(torch.as_tensor(z)).numpy(),
            global_pool(torch.as_tensor(shuffled)).numpy(),
            atol=1e-12,
        )

    def test_batched(self):
        rng = np.random.default_rng(2)
        z = rng.standard_normal((2, 4, 2, 3, 3))
        out = global_pool(torch.as_tensor(z)).numpy()
        assert out.shape == (2, 4)
        np.testing.assert_allclose(out, z.mean(axis=(2, 3, 4)), atol=1e-12)


class TestProjectContext:
    def test_zero_alpha(self):
        gen = ContextGenerator(4, 6, seed=0)
        with torch.no_grad():
            gen.alpha.zero_()
            out = gen(torch.randn(4, dtype=torch.float64))
        np.testing.assert_array_equal(out.numpy(), np.zeros(6))

    def test_identity_projection(self):
        gen = ContextGenerator(5, 5, seed=0)
        with torch.no_grad():
            gen.projection.weight.copy_(torch.eye(5, dtype=torch.float64))
            gen.projection.bias.zero_()
            gen.alpha.fill_(1.0)
            z = torch.randn(5, dtype=torch.float64)
            np.testing.assert_allclose(gen(z).numpy(), z.numpy(), atol=1e-15)

    def test_matches_matvec_oracle(self):
        rng = np.random.default_rng(3)
        gen = ContextGenerator(4, 3, seed=1)
        with torch.no_grad():
            gen.alpha.fill_(1.7)
            z = torch.as_tensor(rng.standard_normal(4))
            out = gen(z).numpy()
        w = gen.projection.weight.detach().numpy()
        b = gen.projection.bias.detach().numpy()
        expected = 1.7 * (w @ z.numpy() + b)
        np.testing.assert_allclose(out, expected, atol=1e-12)


class TestAggregateVideo:
    def test_single_frame_equal_context(self):
        r = torch.tensor([[1.0, 2.0, 3.0]], dtype=torch.float64)
        out = aggregate_video(r, r[0])
        np.testing.assert_allclose(out.numpy(), r[0].numpy(), atol=1e-15)

    def test_zero_context_shrinks_towards_mean(self):
        r = torch.ones((3, 4), dtype=torch.float64) * 2.0
        out = aggregate_video(r, torch.zeros(4, dtype=torch.float64))
        np.testing.assert_allclose(out.numpy(), 2.0 * 3 / 4, atol=1e-15)

    def test_hand_value(self):
        r = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
        p = torch.tensor([1.0, 1.0], dtype=torch.float64)
        np.testing.assert_allclose(
            aggregate_video(r, p).numpy(), [2.0 / 3.0, 2.0 / 3.0], atol=1e-15
        )

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            aggregate_video(torch.zeros((0, 3), dtype=torch.float64), torch.zeros(3))

    def test_linear_in_frames_and_context(self):
        rng = np.random.default_rng(4)
        r1 = torch.as_tensor(rng.standard_normal((4, 5)))
        r2 = torch.as_tensor(rng.standard_normal((4, 5)))
        p1 = torch.as_tensor(rng.standard_normal(5))
        p2 = torch.as_tensor(rng.standard_normal(5))
        a, b = 0.7, -1.3
        lhs = aggregate_video(a * r1 + b * r2, a * p1 + b * p2)
        rhs = a * aggregate_video(r1, p1) + b * aggregate_video(r2, p2)
        np.testing.assert_allclose(lhs.numpy(), rhs.numpy(), atol=1e-10)

    def test_context_equal_to_frame_mean_is_identity(self):
        rng = np.random.default_rng(5)
        r = torch.as_tensor(rng.standard_normal((6, 4)))
        mean = r.mean(dim=0)
        np.testing.assert_allclose(
            aggregate_video(r, mean).numpy(), mean.numpy(), atol=1e-12
        )

    def test_batched(self):
        rng = np.random.default_rng(6)
        r = torch.as_tensor(rng.standard_normal((3, 4, 5)))
        p = torch.as_tensor(rng.standard_normal((3, 5)))
        out = aggregate_video(r, p).numpy()
        for i in range(3):
            np.testing.assert_allclose(
                out[i], aggregate_video(r[i], p[i]).numpy(), atol=1e-12
            )


class TestBaselineVideoFeature:
    def test_single_frame(self):
        r = torch.tensor([[2.0, -1.0]], dtype=torch.float64)
        np.testing.assert_array_equal(baseline_video_feature(r).numpy(), [2.0, -1.0])

    def test_opposite_frames_cancel(self):
        r = torch.tensor([[1.0, 2.0], [-1.0, -2.0]], dtype=torch.float64)
        np.testing.assert_allclose(baseline_video_feature(r).numpy(), [0.0, 0.0], atol=1e-15)

    def test_matches_loop_mean(self):
        rng = np.random.default_rng(7)
        r = rng.standard_normal((3, 6))
        out = baseline_video_feature(torch.as_tensor(r)).numpy()
        np.testing.assert_allclose(out, r.mean(axis=0), atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            baseline_video_feature(torch.zeros((0, 3), dtype=torch.float64))


class TestGradients:
    def test_projection_and_aggregation_gradients(self):
        rng = np.random.default_rng(8)
        gen = ContextGenerator(6, 4, seed=2)
        z_t = torch.as_tensor(rng.standard_normal(6))
        frames = torch.as_tensor(rng.standard_normal((5, 4)))
        target = torch.as_tensor(rng.standard_normal(4))

        def loss():
            v = aggregate_video(frames, gen(z_t))
            return ((v - target) ** 2).sum()

        errors = fd_group_errors(loss, gen, rng)
        assert max(errors.values()) < 1e-4, errors
