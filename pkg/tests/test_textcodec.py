"""Vocabulary, tokenization, and nearest-word readout."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointvq.textcodec import (
    PAD_ID,
    PAD_WORD,
    TEXT_LENGTH,
    CaptionLengthError,
    OovError,
    Vocabulary,
    detokenize,
    embed,
    nearest_word_decode,
    tokenize,
    tokenize_all,
)

CAPTIONS = [
    "the red 3 is in the center.",
    "the blue 7 is on the upper left.",
]


class TestVocabulary:
    def test_first_occurrence_order(self):
        vocab = Vocabulary.build(CAPTIONS)
        assert vocab.words[0] == PAD_WORD
        assert vocab.words[1:6] == ["the", "red", "3", "is", "in"]

    def test_ids_round_trip(self):
        vocab = Vocabulary.build(CAPTIONS)
        for i, w in enumerate(vocab.words):
            assert vocab.id_of(w) == i
            assert vocab.word_of(i) == w

    def test_oov_raises(self):
        vocab = Vocabulary.build(CAPTIONS)
        with pytest.raises(OovError):
            vocab.id_of("purple")

    def test_save_load_round_trip(self, tmp_path):
        vocab = Vocabulary.build(CAPTIONS)
        vocab.save(tmp_path / "vocab.json")
        again = Vocabulary.load(tmp_path / "vocab.json")
        assert again.words == vocab.words
        assert again.content_hash() == vocab.content_hash()

    def test_content_hash_tracks_words(self):
        a = Vocabulary.build(CAPTIONS)
        b = Vocabulary.build(reversed(CAPTIONS))
        assert a.content_hash() != b.content_hash()

    def test_pad_must_be_id_zero(self):
        with pytest.raises(ValueError):
            Vocabulary(["the", PAD_WORD])


class TestTokenize:
    def test_right_padding(self):
        vocab = Vocabulary.build(CAPTIONS)
        ids = tokenize(vocab, CAPTIONS[0], length=16)
        assert ids.shape == (16,)
        assert (ids[:7] != PAD_ID).all()
        assert (ids[7:] == PAD_ID).all()

    def test_default_length(self):
        vocab = Vocabulary.build(CAPTIONS)
        assert tokenize(vocab, CAPTIONS[0]).shape == (TEXT_LENGTH,)

    def test_round_trip(self):
        vocab = Vocabulary.build(CAPTIONS)
        for caption in CAPTIONS:
            assert detokenize(vocab, tokenize(vocab, caption)) == caption

    def test_interior_pads_kept_trailing_stripped(self):
        vocab = Vocabulary.build(CAPTIONS)
        ids = np.array([1, 0, 2, 0, 0])
        assert detokenize(vocab, ids) == f"the {PAD_WORD} red"

    def test_overlong_caption_rejected(self):
        vocab = Vocabulary.build(CAPTIONS)
        with pytest.raises(CaptionLengthError):
            tokenize(vocab, " ".join(["the"] * 65), length=64)

    def test_tokenize_all_shape(self):
        vocab = Vocabulary.build(CAPTIONS)
        batch = tokenize_all(vocab, CAPTIONS, length=32)
        assert batch.shape == (2, 32)
        assert batch.dtype == np.int64


class TestEmbedding:
    def test_embed_is_row_lookup(self):
        table = np.arange(12, dtype=np.float64).reshape(4, 3)
        out = embed(table, np.array([2, 0, 3]))
        np.testing.assert_array_equal(out, table[[2, 0, 3]])

    def test_nearest_decode_recovers_exact_rows(self):
        vocab = Vocabulary.build(CAPTIONS)
        rng = np.random.default_rng(0)
        table = rng.normal(size=(vocab.size, 8))
        ids = tokenize(vocab, CAPTIONS[1], length=12)
        recon = table[ids]
        assert nearest_word_decode(vocab, table, recon) == CAPTIONS[1]

    def test_nearest_decode_robust_to_small_noise(self):
        vocab = Vocabulary.build(CAPTIONS)
        rng = np.random.default_rng(1)
        table = rng.normal(size=(vocab.size, 16))
        ids = tokenize(vocab, CAPTIONS[0], length=10)
        recon = table[ids] + rng.normal(scale=1e-3, size=(10, 16))
        assert nearest_word_decode(vocab, table, recon) == CAPTIONS[0]

    def test_tie_breaks_to_lowest_id(self):
        vocab = Vocabulary(["<pad>", "a", "b"])
        table = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        recon = np.array([[1.0, 0.0]])
        assert nearest_word_decode(vocab, table, recon) == "a"

    def test_matches_bruteforce_oracle(self):
        """Expanded-form distances agree with naive per-pair computation."""
        rng = np.random.default_rng(2)
        vocab = Vocabulary([PAD_WORD] + [f"w{i}" for i in range(19)])
        table = rng.normal(size=(20, 32))
        recon = rng.normal(size=(15, 32))
        naive = []
        for row in recon:
            dists = [np.sum((row - t) ** 2) for t in table]
            naive.append(int(np.argmin(dists)))
        expected = detokenize(vocab, np.array(naive))
        assert nearest_word_decode(vocab, table, recon) == expected

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_decode_of_clean_rows_is_inverse(self, seed):
        rng = np.random.default_rng(seed)
        vocab = Vocabulary([PAD_WORD] + [f"w{i}" for i in range(7)])
        table = rng.normal(size=(8, 4))
        ids = rng.integers(1, 8, size=6)
        recon = table[ids]
        assert nearest_word_decode(vocab, table, recon) == detokenize(vocab, ids)
