"""Autoregressive prior: likelihoods, causality, constrained sampling."""

import math

import pytest
import torch
import torch.nn.functional as F

from jointvq.prior import PriorConfig, SequencePrior, initial_nll_reference


def tiny_prior(seed=0, **overrides):
    kwargs = dict(content_vocab=10, seq_len=8, layers=2, heads=2, dim=64)
    kwargs.update(overrides)
    torch.manual_seed(seed)
    return SequencePrior(PriorConfig(**kwargs))


class TestConfig:
    def test_bos_sits_past_content_vocab(self):
        cfg = PriorConfig(content_vocab=256, seq_len=64)
        assert cfg.vocab_size == 257
        assert cfg.bos_id == 256

    def test_paper_scale_dimensions(self):
        cfg = PriorConfig.paper_scale(content_vocab=256, seq_len=64)
        assert (cfg.layers, cfg.heads, cfg.dim) == (8, 8, 512)

    def test_validation(self):
        with pytest.raises(ValueError):
            PriorConfig(content_vocab=0, seq_len=8)
        with pytest.raises(ValueError):
            PriorConfig(content_vocab=4, seq_len=0)
        with pytest.raises(ValueError):
            PriorConfig(content_vocab=4, seq_len=8, dim=64, heads=3)


class TestLikelihood:
    def test_initial_nll_near_uniform(self):
        model = tiny_prior(content_vocab=256, seq_len=64, layers=4, heads=4, dim=256)
        g = torch.Generator().manual_seed(1)
        seq = torch.randint(0, 256, (16, 64), generator=g)
        nll = model.nll(seq).item()
        assert abs(nll - math.log(257)) < 0.2

    def test_nll_matches_manual_cross_entropy(self):
        model = tiny_prior()
        g = torch.Generator().manual_seed(2)
        seq = torch.randint(0, 10, (4, 8), generator=g)
        bos = torch.full((4, 1), model.config.bos_id)
        logits = model.logits(torch.cat([bos, seq[:, :-1]], dim=1))
        manual = -F.log_softmax(logits, dim=-1).gather(-1, seq[:, :, None]).mean()
        assert torch.isclose(model.nll(seq), manual, atol=1e-6)

    def test_nll_rejects_wrong_length(self):
        model = tiny_prior()
        with pytest.raises(ValueError):
            model.nll(torch.zeros(2, 7, dtype=torch.int64))

    def test_reference_is_log_vocab(self):
        assert initial_nll_reference(257) == math.log(257)


class TestCausality:
    def test_future_tokens_cannot_reach_past_logits(self):
        model = tiny_prior()
        g = torch.Generator().manual_seed(3)
        a = torch.randint(0, 10, (2, 8), generator=g)
        b = a.clone()
        b[:, 5:] = (b[:, 5:] + 3) % 10
        la = model.logits(a)
        lb = model.logits(b)
        assert torch.allclose(la[:, :5], lb[:, :5], atol=1e-6)
        assert not torch.allclose(la[:, 5:], lb[:, 5:])

    def test_rejects_overlong_inputs(self):
        model = tiny_prior()
        with pytest.raises(ValueError):
            model.logits(torch.zeros(1, 9, dtype=torch.int64))


class TestSampling:
    def test_shape_and_id_range(self):
        model = tiny_prior()
        out = model.sample(5, seed=0)
        assert out.shape == (5, 8)
        assert out.min() >= 0
        assert out.max() < 10

    def test_bos_never_emitted(self):
        model = tiny_prior()
        with torch.no_grad():
            model.head.bias[model.config.bos_id] = 50.0
        out = model.sample(8, seed=0)
        assert (out != model.config.bos_id).all()

    def test_seeded_sampling_is_deterministic(self):
        model = tiny_prior()
        a = model.sample(4, seed=11)
        b = model.sample(4, seed=11)
        c = model.sample(4, seed=12)
        assert torch.equal(a, b)
        assert not torch.equal(a, c)

    def test_greedy_matches_top_k_one(self):
        model = tiny_prior()
        greedy = model.sample(3, temperature=0.0)
        via_top_k = model.sample(3, temperature=0.7, top_k=1, seed=5)
        assert torch.equal(greedy, via_top_k)

    def test_position_ranges_are_enforced(self):
        model = tiny_prior()
        ranges = [(0, 4)] * 4 + [(4, 10)] * 4
        out = model.sample(6, seed=1, position_ranges=ranges)
        assert (out[:, :4] < 4).all()
        assert (out[:, 4:] >= 4).all()

    def test_wrong_range_count_rejected(self):
        model = tiny_prior()
        with pytest.raises(ValueError):
            model.sample(1, position_ranges=[(0, 10)] * 3)

    def test_training_mode_restored(self):
        model = tiny_prior()
        model.train()
        model.sample(1, seed=0)
        assert model.training
        model.eval()
        model.sample(1, seed=0)
        assert not model.training


class TestMemorization:
    def test_single_sequence_overfit(self):
        model = tiny_prior(seed=4)
        g = torch.Generator().manual_seed(5)
        seq = torch.randint(0, 10, (1, 8), generator=g)
        optimizer = torch.optim.AdamW(model.parameters(), lr=1e-3)
        for _ in range(300):
            optimizer.zero_grad()
            loss = model.nll(seq)
            loss.backward()
            optimizer.step()
        assert model.nll(seq).item() < 0.01
        assert torch.equal(model.sample(1, temperature=0.0), seq)
