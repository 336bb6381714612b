"""Mask decoder: loop oracles for attention/expansion, softmax and MinMax
contracts, gradient checks, and mask application."""

import math

import numpy as np
import pytest
import torch

from evclip.exceptions import ConfigurationError, DomainError
from evclip.mask import (
    MaskGenerator,
    PatchExpand,
    TemporalProjection,
    WindowAttentionBlock,
    apply_mask,
    minmax_scale,
    pixel_softmax,
)
from util import fd_group_errors


def run(module, *args):
    with torch.no_grad():
        return module(*args)


def randomize_module(module: torch.nn.Module, seed: int):
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.uniform_(-0.5, 0.5, generator=g)


class TestTemporalProjection:
    def test_uniform_weights_average_constant(self):
        proj = TemporalProjection(4)
        z = torch.ones((3, 4, 2, 2), dtype=torch.float64) * 2.5
        out = run(proj, z)
        np.testing.assert_allclose(out.numpy(), z[:, 0].numpy(), atol=1e-15)

    def test_one_hot_selects_slice(self):
        proj = TemporalProjection(3)
        with torch.no_grad():
            proj.weights.copy_(torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64))
        z = torch.randn((2, 3, 4, 4), dtype=torch.float64)
        np.testing.assert_array_equal(run(proj, z).numpy(), z[:, 0].numpy())

    def test_matches_dot_product_oracle(self):
        rng = np.random.default_rng(0)
        proj = TemporalProjection(5)
        w = rng.standard_normal(5)
        with torch.no_grad():
            proj.weights.copy_(torch.as_tensor(w))
        z = rng.standard_normal((3, 5, 2, 4))
        out = run(proj, torch.as_tensor(z)).numpy()
        for c in range(3):
            for y in range(2):
                for x in range(4):
                    assert out[c, y, x] == pytest.approx(w @ z[c, :, y, x], abs=1e-12)

    def test_time_mismatch(self):
        proj = TemporalProjection(4)
        with pytest.raises(ConfigurationError):
            proj(torch.zeros((2, 3, 4, 4), dtype=torch.float64))


def gelu(x):
    return 0.5 * x * (1.0 + np.vectorize(math.erf)(x / math.sqrt(2.0)))


def attention_block_oracle(block: WindowAttentionBlock, x: np.ndarray) -> np.ndarray:
    """Literal per-window, per-head attention + feedforward in numpy."""
    c, s_h, s_w = x.shape
    win = block.window
    shift = win // 2 if block.shifted else 0
    y = np.transpose(x, (1, 2, 0))  # (Sh, Sw, C)
    if shift:
        y = np.roll(y, (-shift, -shift), axis=(0, 1))

    wq = block.qkv.weight.detach().numpy()
    bq = block.qkv.bias.detach().numpy()
    wp = block.proj.weight.detach().numpy()
    bp = block.proj.bias.detach().numpy()
    heads, hd = block.heads, block.head_dim

    out = y.copy()
    for wy in range(s_h // win):
        for wx in range(s_w // win):
            tokens = y[wy * win : (wy + 1) * win, wx * win : (wx + 1) * win, :].reshape(-1, c)
            qkv = tokens @ wq.T + bq
            q, k, v = qkv[:, :c], qkv[:, c : 2 * c], qkv[:, 2 * c :]
            merged = np.zeros_like(tokens)
            for h in range(heads):
                qs = q[:, h * hd : (h + 1) * hd]
                ks = k[:, h * hd : (h + 1) * hd]
                vs = v[:, h * hd : (h + 1) * hd]
                logits = qs @ ks.T / math.sqrt(hd)
                logits -= logits.max(axis=1, keepdims=True)
                attn = np.exp(logits)
                attn /= attn.sum(axis=1, keepdims=True)
                merged[:, h * hd : (h + 1) * hd] = attn @ vs
            block_out = tokens + (merged @ wp.T + bp)
            out[wy * win : (wy + 1) * win, wx * win : (wx + 1) * win, :] = block_out.reshape(
                win, win, c
            )
    if shift:
        out = np.roll(out, (shift, shift), axis=(0, 1))

    w1 = block.fc1.weight.detach().numpy()
    b1 = block.fc1.bias.detach().numpy()
    w2 = block.fc2.weight.detach().numpy()
    b2 = block.fc2.bias.detach().numpy()
    out = out + (gelu(out @ w1.T + b1) @ w2.T + b2)
    return np.transpose(out, (2, 0, 1))


class TestWindowAttentionBlock:
    def test_fresh_block_is_identity(self):
        block = WindowAttentionBlock(8, 4, shifted=False, generator=torch.Generator().manual_seed(0))
        x = torch.randn((2, 8, 4, 4), dtype=torch.float64)
        np.testing.assert_array_equal(run(block, x).numpy(), x.numpy())

    def test_one_by_one_window_is_value_projection(self):
        block = WindowAttentionBlock(4, 1, shifted=False, generator=torch.Generator().manual_seed(1))
        randomize_module(block, 11)
        x = torch.randn((1, 4, 2, 2), dtype=torch.float64)
        out = run(block, x).numpy()
        # Single-token softmax is 1, so attention passes v straight through.
        y = x[0].permute(1, 2, 0).numpy().reshape(-1, 4)
        qkv = y @ block.qkv.weight.detach().numpy().T + block.qkv.bias.detach().numpy()
        v = qkv[:, 8:]
        attended = y + v @ block.proj.weight.detach().numpy().T + block.proj.bias.detach().numpy()
        ffn_in = attended
        expected = ffn_in + (
            gelu(ffn_in @ block.fc1.weight.detach().numpy().T + block.fc1.bias.detach().numpy())
            @ block.fc2.weight.detach().numpy().T
            + block.fc2.bias.detach().numpy()
        )
        np.testing.assert_allclose(
            out[0], expected.reshape(2, 2, 4).transpose(2, 0, 1), atol=1e-10
        )

    @pytest.mark.parametrize("shifted", [False, True])
    def test_matches_loop_oracle(self, shifted):
        block = WindowAttentionBlock(4, 2, shifted=shifted, generator=torch.Generator().manual_seed(2))
        randomize_module(block, 21 + int(shifted))
        x = torch.randn((1, 4, 2, 2), dtype=torch.float64)
        expected = attention_block_oracle(block, x[0].numpy())
        np.testing.assert_allclose(run(block, x)[0].numpy(), expected, atol=1e-10)

    @pytest.mark.parametrize("shifted", [False, True])
    def test_matches_loop_oracle_multiwindow(self, shifted):
        block = WindowAttentionBlock(8, 4, shifted=shifted, generator=torch.Generator().manual_seed(3))
        randomize_module(block, 31 + int(shifted))
        x = torch.randn((1, 8, 8, 8), dtype=torch.float64)
        expected = attention_block_oracle(block, x[0].numpy())
        np.testing.assert_allclose(run(block, x)[0].numpy(), expected, atol=1e-10)

    def test_window_not_tiling_is_internal_error(self):
        block = WindowAttentionBlock(4, 4, shifted=False, generator=torch.Generator().manual_seed(4))
        with pytest.raises(RuntimeError, match="window"):
            block(torch.zeros((1, 4, 6, 6), dtype=torch.float64))


class TestPatchExpand:
    def test_shape_contract(self):
        for factor, c_in, c_out in [(2, 32, 16), (2, 16, 16), (4, 64, 16), (4, 16, 16)]:
            expand = PatchExpand(c_in, factor, torch.Generator().manual_seed(0))
            assert expand.out_channels == c_out
            x = torch.randn((2, c_in, 4, 4), dtype=torch.float64)
            assert tuple(run(expand, x).shape) == (2, c_out, 4 * factor, 4 * factor)

    def test_identity_structured_weights_replicate_pixels(self):
        expand = PatchExpand(16, 2, torch.Generator().manual_seed(0))
        with torch.no_grad():
            eye = torch.eye(16, dtype=torch.float64)
            expand.expand.weight.copy_(torch.cat([eye] * 4, dim=0))
            expand.expand.bias.zero_()
            expand.reduce.weight.copy_(eye)
            expand.reduce.bias.zero_()
        x = torch.randn((1, 16, 3, 3), dtype=torch.float64)
        out = run(expand, x).numpy()
        for i in range(3):
            for j in range(3):
                for p in range(2):
                    for q in range(2):
                        np.testing.assert_array_equal(
                            out[0, :, 2 * i + p, 2 * j + q], x[0, :, i, j].numpy()
                        )

    def test_gradient_matches_finite_differences(self):
        expand = PatchExpand(8, 2, torch.Generator().manual_seed(5))
        x = torch.randn((1, 8, 2, 2), dtype=torch.float64)
        rng = np.random.default_rng(7)
        errors = fd_group_errors(lambda: expand(x).sum(), expand, rng)
        assert max(errors.values()) < 1e-9  # linear map: exact up to rounding


class TestPixelSoftmax:
    def test_uniform_scores(self):
        out = pixel_softmax(torch.zeros((4, 4), dtype=torch.float64))
        np.testing.assert_allclose(out.numpy(), 0.0625, rtol=0, atol=1e-15)

    def test_dominant_pixel_no_overflow(self):
        scores = torch.zeros((4, 4), dtype=torch.float64)
        scores[1, 2] = 1000.0
        out = pixel_softmax(scores)
        assert torch.isfinite(out).all()
        assert out[1, 2].item() == pytest.approx(1.0, abs=1e-12)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(3)
        scores = rng.standard_normal((3, 3))
        expected = np.exp(scores) / np.exp(scores).sum()
        out = pixel_softmax(torch.as_tensor(scores)).numpy()
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_sums_to_one(self):
        rng = np.random.default_rng(4)
        scores = torch.as_tensor(rng.standard_normal((10, 8, 8)) * 50)
        sums = pixel_softmax(scores).sum(dim=(-2, -1)).numpy()
        np.testing.assert_allclose(sums, 1.0, atol=1e-6)


class TestMinMaxScale:
    def test_hand_values(self):
        field = torch.tensor([[0.1, 0.3], [0.2, 0.5]], dtype=torch.float64)
        expected = [[0.0, 0.5], [0.25, 1.0]]
        np.testing.assert_allclose(minmax_scale(field).numpy(), expected, atol=1e-12)

    def test_constant_field_gives_ones(self):
        field = torch.full((5, 5), 0.125, dtype=torch.float64)
        np.testing.assert_array_equal(minmax_scale(field).numpy(), np.ones((5, 5)))

    def test_range_attained_exactly(self):
        rng = np.random.default_rng(5)
        field = torch.as_tensor(rng.standard_normal((7, 6)))
        out = minmax_scale(field)
        assert out.min().item() == 0.0
        assert out.max().item() == 1.0

    def test_batched_mixed_degeneracy(self):
        field = torch.stack(
            [
                torch.full((3, 3), 2.0, dtype=torch.float64),
                torch.arange(9, dtype=torch.float64).reshape(3, 3),
            ]
        )
        out = minmax_scale(field)
        np.testing.assert_array_equal(out[0].numpy(), np.ones((3, 3)))
        assert out[1].min().item() == 0.0 and out[1].max().item() == 1.0


@pytest.fixture(scope="module")
def generator():
    return MaskGenerator(
        latent_channels=8,
        latent_time=2,
        latent_height=4,
        latent_width=4,
        frame_height=32,
        frame_width=32,
        seed=9,
    )


class TestMaskGenerator:
    def test_stage_count_and_shape(self, generator):
        assert len(generator.stages) == 1  # log2(32/4) - 2
        z = torch.randn((8, 2, 4, 4), dtype=torch.float64)
        mask = run(generator, z)
        assert tuple(mask.shape) == (32, 32)

    def test_values_in_unit_interval(self, generator):
        rng = np.random.default_rng(6)
        z = torch.as_tensor(rng.standard_normal((5, 8, 2, 4, 4)))
        mask = run(generator, z)
        assert mask.min().item() >= 0.0
        assert mask.max().item() <= 1.0

    def test_larger_frame_has_two_stages(self):
        gen = MaskGenerator(8, 2, 4, 4, 64, 64, seed=0)
        assert len(gen.stages) == 2
        z = torch.randn((8, 2, 4, 4), dtype=torch.float64)
        assert tuple(run(gen, z).shape) == (64, 64)

    def test_inconsistent_dims_rejected(self):
        with pytest.raises(ConfigurationError):
            MaskGenerator(8, 2, 4, 4, 32, 64, seed=0)
        with pytest.raises(ConfigurationError):
            MaskGenerator(8, 2, 4, 4, 8, 8, seed=0)

    def test_latent_shape_checked(self, generator):
        with pytest.raises(ConfigurationError):
            generator(torch.zeros((8, 3, 4, 4), dtype=torch.float64))

    def test_identity_under_zero_residual_branches(self, generator):
        # Residual-branch output projections start at zero, so the block stack
        # must equal the plain projection/expansion path.
        z = torch.randn((3, 8, 2, 4, 4), dtype=torch.float64)
        with torch.no_grad():
            full = generator(z)
            x = generator.temporal(z)
            for stage in generator.stages:
                x = stage.expand(x)
            x = generator.final_expand(x)
            scores = generator.final_proj(x.permute(0, 2, 3, 1)).squeeze(-1)
            trunk = minmax_scale(pixel_softmax(scores))
        np.testing.assert_array_equal(full.numpy(), trunk.numpy())

    def test_gradient_of_mean_mask(self, generator):
        z = torch.as_tensor(np.random.default_rng(8).standard_normal((2, 8, 2, 4, 4)))
        rng = np.random.default_rng(9)
        errors = fd_group_errors(lambda: generator(z).mean(), generator, rng)
        assert max(errors.values()) < 1e-4, errors


class TestApplyMask:
    def test_all_ones_identity_bitwise(self):
        frames = torch.as_tensor(np.random.default_rng(1).uniform(0, 1, (4, 3, 8, 8)))
        out = apply_mask(frames, torch.ones((8, 8), dtype=torch.float64))
        np.testing.assert_array_equal(out.numpy(), frames.numpy())

    def test_all_zeros(self):
        frames = torch.as_tensor(np.random.default_rng(2).uniform(0, 1, (4, 3, 8, 8)))
        out = apply_mask(frames, torch.zeros((8, 8), dtype=torch.float64))
        np.testing.assert_array_equal(out.numpy(), np.zeros((4, 3, 8, 8)))

    def test_matches_pixel_loop(self):
        rng = np.random.default_rng(3)
        frames = rng.uniform(0, 1, (2, 3, 4, 4))
        mask = rng.uniform(0, 1, (4, 4))
        out = apply_mask(torch.as_tensor(frames), torch.as_tensor(mask)).numpy()
        for t in range(2):
            for c in range(3):
                for y in range(4):
                    for x in range(4):
                        assert out[t, c, y, x] == frames[t, c, y, x] * mask[y, x]

    def test_one_mask_per_clip(self):
        rng = np.random.default_rng(4)
        frames = torch.as_tensor(rng.uniform(0.1, 1, (5, 3, 4, 4)))
        mask = torch.as_tensor(rng.uniform(0.1, 1, (4, 4)))
        out = apply_mask(frames, mask)
        ratios = (out / frames).numpy()
        for t in range(5):
            for c in range(3):
                np.testing.assert_allclose(ratios[t, c], mask.numpy(), atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            apply_mask(
                torch.zeros((2, 3, 8, 8), dtype=torch.float64),
                torch.zeros((4, 4), dtype=torch.float64),
            )
