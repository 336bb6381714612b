"""Embedding-archive binary format: round trips and corruption handling."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evclip.archive import (
    EmbeddingArchive,
    load_embedding_archive,
    write_embedding_archive,
)
from evclip.exceptions import FormatError
from util import random_archive


def small_archive() -> EmbeddingArchive:
    rng = np.random.default_rng(0)
    return EmbeddingArchive(
        video_ids=["vid_a", "vid_b"],
        labels=np.array([0, 1]),
        class_names=["waving", "jumping"],
        text_embeddings=rng.standard_normal((2, 3)).astype(np.float32),
        frame_embeddings=rng.standard_normal((2, 4, 3)).astype(np.float32),
        latents=rng.standard_normal((2, 2, 2, 2, 2)).astype(np.float32),
    )


def assert_archives_equal(a: EmbeddingArchive, b: EmbeddingArchive):
    assert a.video_ids == b.video_ids
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.class_names == b.class_names
    np.testing.assert_array_equal(a.text_embeddings, b.text_embeddings)
    np.testing.assert_array_equal(a.frame_embeddings, b.frame_embeddings)
    np.testing.assert_array_equal(a.latents, b.latents)


class TestRoundTrip:
    def test_two_video_round_trip(self, tmp_path):
        archive = small_archive()
        path = tmp_path / "a.evca"
        write_embedding_archive(path, archive)
        assert_archives_equal(archive, load_embedding_archive(path))

    def test_write_read_write_bytes_identical(self, tmp_path):
        archive = small_archive()
        p1, p2 = tmp_path / "a.evca", tmp_path / "b.evca"
        write_embedding_archive(p1, archive)
        write_embedding_archive(p2, load_embedding_archive(p1))
        assert p1.read_bytes() == p2.read_bytes()

    @given(seed=st.integers(0, 2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_randomized_round_trip(self, tmp_path_factory, seed):
        rng = np.random.default_rng(seed)
        archive = random_archive(rng)
        path = tmp_path_factory.mktemp("arch") / "r.evca"
        write_embedding_archive(path, archive)
        assert_archives_equal(archive, load_embedding_archive(path))


class TestCorruption:
    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "a.evca"
        write_embedding_archive(path, small_archive())
        data = bytearray(path.read_bytes())
        data[:4] = b"NOPE"
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="byte 0"):
            load_embedding_archive(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "a.evca"
        write_embedding_archive(path, small_archive())
        data = bytearray(path.read_bytes())
        data[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="version"):
            load_embedding_archive(path)

    def test_zero_dim_header(self, tmp_path):
        path = tmp_path / "a.evca"
        write_embedding_archive(path, small_archive())
        data = bytearray(path.read_bytes())
        data[20:24] = struct.pack("<I", 0)  # embedding dim field
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="byte"):
            load_embedding_archive(path)

    def test_truncated_latent_names_video(self, tmp_path):
        path = tmp_path / "a.evca"
        write_embedding_archive(path, small_archive())
        data = path.read_bytes()
        # Drop the checksum plus part of the final latent block.
        path.write_bytes(data[:-30])
        with pytest.raises(FormatError, match="vid_b"):
            load_embedding_archive(path)

    def test_checksum_mismatch(self, tmp_path):
        path = tmp_path / "a.evca"
        write_embedding_archive(path, small_archive())
        data = bytearray(path.read_bytes())
        data[-12] ^= 0xFF  # flip a payload byte, keep length intact
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="checksum"):
            load_embedding_archive(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "a.evca"
        write_embedding_archive(path, small_archive())
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(FormatError, match="trailing"):
            load_embedding_archive(path)


class TestInvariants:
    def test_label_out_of_range_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(FormatError):
            EmbeddingArchive(
                video_ids=["v"],
                labels=np.array([2]),
                class_names=["a", "b"],
                text_embeddings=rng.standard_normal((2, 3)).astype(np.float32),
                frame_embeddings=rng.standard_normal((1, 2, 3)).astype(np.float32),
                latents=rng.standard_normal((1, 1, 1, 1, 1)).astype(np.float32),
            )

    def test_manifest_embedding_count_mismatch(self):
        rng = np.random.default_rng(0)
        with pytest.raises(FormatError):
            EmbeddingArchive(
                video_ids=["v1", "v2"],
                labels=np.array([0, 0]),
                class_names=["a"],
                text_embeddings=rng.standard_normal((1, 3)).astype(np.float32),
                frame_embeddings=rng.standard_normal((1, 2, 3)).astype(np.float32),
                latents=rng.standard_normal((2, 1, 1, 1, 1)).astype(np.float32),
            )
