"""Baseline codecs: sequence layout, id offsets, and order-variant parity."""

import pytest
import torch

from jointvq.baselines import (
    ORDER_FAMILIES,
    ImageVQTextEmbed,
    ModelKind,
    SeparateVQ,
    SharedCodebookVQ,
    build_model,
)
from jointvq.stage1 import JointVQ, Stage1Config

VOCAB = 24


def small_config():
    return Stage1Config(vocab_size=VOCAB)


def small_batch(seed=0, batch=2):
    g = torch.Generator().manual_seed(seed)
    images = torch.rand(batch, 3, 64, 64, generator=g) * 2 - 1
    tokens = torch.randint(0, VOCAB, (batch, 64), generator=g)
    return images, tokens


class TestModelKind:
    def test_families_strip_order_suffix(self):
        assert ModelKind.SHARED_CODEBOOK_IT.family == "shared-codebook"
        assert ModelKind.SHARED_CODEBOOK_TI.family == "shared-codebook"
        assert ModelKind.JOINT.family == "joint"
        assert ModelKind.NO_TEXT_COMPRESSION.family == "no-text-compression"

    def test_text_first_flag(self):
        assert ModelKind.SEPARATE_VQ_TI.text_first
        assert not ModelKind.SEPARATE_VQ_IT.text_first
        assert not ModelKind.JOINT.text_first

    def test_every_order_family_has_both_variants(self):
        values = {k.value for k in ModelKind}
        for family in ORDER_FAMILIES:
            assert f"{family}-it" in values
            assert f"{family}-ti" in values


class TestBuildModel:
    def test_kind_round_trips(self):
        for kind in ModelKind:
            model = build_model(kind, small_config())
            assert model.kind == kind.value

    def test_accepts_string_kind(self):
        model = build_model("separate-vq-ti", small_config())
        assert isinstance(model, SeparateVQ)
        assert model.text_first

    def test_joint_variants_share_class(self):
        assert isinstance(build_model("joint", small_config()), JointVQ)
        assert isinstance(build_model("no-text-compression", small_config()), JointVQ)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            build_model("diffusion", small_config())


class TestSequenceLayout:
    def test_shared_codebook_geometry(self):
        model = SharedCodebookVQ(small_config())
        assert model.seq_len == 72
        assert model.content_vocab == 256
        assert model.position_ranges() == [(0, 256)] * 72

    def test_separate_vq_geometry(self):
        model = SeparateVQ(small_config())
        assert model.seq_len == 72
        assert model.content_vocab == 512
        ranges = model.position_ranges()
        assert ranges[:64] == [(0, 256)] * 64
        assert ranges[64:] == [(256, 512)] * 8

    def test_text_first_swaps_blocks(self):
        model = SeparateVQ(small_config(), text_first=True)
        ranges = model.position_ranges()
        assert ranges[:8] == [(256, 512)] * 8
        assert ranges[8:] == [(0, 256)] * 64

    def test_img_vq_text_embed_geometry(self):
        model = ImageVQTextEmbed(small_config())
        assert model.seq_len == 128
        assert model.content_vocab == 256 + VOCAB
        ranges = model.position_ranges()
        assert ranges[:64] == [(0, 256)] * 64
        assert ranges[64:] == [(256, 256 + VOCAB)] * 64

    def test_encoded_blocks_live_in_their_ranges(self):
        images, tokens = small_batch()
        for kind in ModelKind:
            model = build_model(kind, small_config())
            seq = model.encode_to_indices(images, tokens)
            assert seq.shape == (2, model.seq_len)
            for pos, (lo, hi) in enumerate(model.position_ranges()):
                col = seq[:, pos]
                assert col.min() >= lo and col.max() < hi, kind


class TestRoundTrips:
    def test_text_ids_round_trip_losslessly(self):
        images, tokens = small_batch()
        model = ImageVQTextEmbed(small_config())
        seq = model.encode_to_indices(images, tokens)
        _, txt = model.decode_from_indices(seq)
        assert torch.equal(txt, tokens)

    def test_text_ids_round_trip_text_first(self):
        images, tokens = small_batch()
        model = ImageVQTextEmbed(small_config(), text_first=True)
        seq = model.encode_to_indices(images, tokens)
        assert torch.equal(seq[:, :64], tokens + 256)
        _, txt = model.decode_from_indices(seq)
        assert torch.equal(txt, tokens)

    def test_decode_validates_ranges(self):
        model = SeparateVQ(small_config())
        seq = model.encode_to_indices(*small_batch())
        bad = seq.clone()
        bad[:, 70] = 5
        with pytest.raises(IndexError):
            model.decode_from_indices(bad)

    def test_decode_shapes(self):
        for kind in ("shared-codebook-it", "separate-vq-ti"):
            model = build_model(kind, small_config())
            seq = model.encode_to_indices(*small_batch())
            images, text = model.decode_from_indices(seq)
            assert images.shape == (2, 3, 64, 64)
            assert text.shape == (2, 64, 128)
            assert images.min() >= -1.0 and images.max() <= 1.0


class TestOrderParity:
    """The it/ti variants differ only in sequence layout, never in training."""

    def test_losses_identical_across_order(self):
        images, tokens = small_batch()
        for family in ORDER_FAMILIES:
            torch.manual_seed(3)
            a = build_model(f"{family}-it", small_config())
            torch.manual_seed(3)
            b = build_model(f"{family}-ti", small_config())
            ta, terms_a, _ = a.compute_loss(images, tokens)
            tb, terms_b, _ = b.compute_loss(images, tokens)
            assert torch.equal(ta, tb)
            for key in terms_a:
                assert torch.equal(terms_a[key], terms_b[key])

    def test_sequences_are_permutations_of_each_other(self):
        images, tokens = small_batch()
        for family in ORDER_FAMILIES:
            torch.manual_seed(3)
            a = build_model(f"{family}-it", small_config())
            torch.manual_seed(3)
            b = build_model(f"{family}-ti", small_config())
            sa = a.encode_to_indices(images, tokens)
            sb = b.encode_to_indices(images, tokens)
            img_len = a.image_len
            assert torch.equal(sa[:, :img_len], sb[:, -img_len:])
            assert torch.equal(sa[:, img_len:], sb[:, : sa.shape[1] - img_len])


class TestLossTerms:
    def test_every_kind_reports_four_terms(self):
        images, tokens = small_batch()
        for kind in ModelKind:
            model = build_model(kind, small_config())
            total, terms, indices = model.compute_loss(images, tokens)
            assert set(terms) == {"recon_img", "recon_txt", "codebook", "commit"}
            assert torch.isclose(total, sum(terms.values()), rtol=1e-6)
            assert indices.shape == (2, model.seq_len)

    def test_uncompressed_text_has_zero_text_loss(self):
        images, tokens = small_batch()
        model = ImageVQTextEmbed(small_config())
        _, terms, _ = model.compute_loss(images, tokens)
        assert terms["recon_txt"].item() == 0.0
