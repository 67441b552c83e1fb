import numpy as np
import pytest

from ctcprior.errors import Diverged
from ctcprior.loss import ctc_loss_and_grad
from ctcprior.toy import (
    SyntheticCorpusConfig,
    ToyModel,
    TrainConfig,
    _forward,
    evaluate_peakiness,
    format_config,
    generate_corpus,
    load_checkpoint,
    model_backward,
    model_forward,
    parse_config,
    save_checkpoint,
    train,
)
from ctcprior.types import Priors

SMALL = SyntheticCorpusConfig(n_utterances=12, min_tokens=2, max_tokens=4, seed=4)


def features_equal(a, b):
    return all(x.features.tobytes() == y.features.tobytes() and x.tokens == y.tokens
               and x.spans == y.spans for x, y in zip(a, b))


class TestCorpus:

    def test_deterministic(self):
        assert features_equal(generate_corpus(SMALL), generate_corpus(SMALL))
        other = generate_corpus(SyntheticCorpusConfig(n_utterances=12, min_tokens=2, max_tokens=4, seed=5))
        assert not features_equal(generate_corpus(SMALL), other)

    def test_noise_free_frames_repeat(self):
        cfg = SyntheticCorpusConfig(n_utterances=5, noise_std=0.0, seed=1)
        for utt in generate_corpus(cfg):
            for span in utt.spans:
                a, b = int(span.onset_ms // 10), int(span.offset_ms // 10)
                assert np.all(utt.features[a:b] == utt.features[a])

    def test_fixed_duration(self):
        cfg = SyntheticCorpusConfig(n_utterances=10, min_duration=3, max_duration=3)
        for utt in generate_corpus(cfg):
            assert all(s.duration_ms == 30.0 for s in utt.spans)

    def test_structure(self):
        for utt in generate_corpus(SMALL):
            assert len(utt.spans) == len(utt.tokens)
            assert all(a != b for a, b in zip(utt.tokens, utt.tokens[1:]))
            assert all(s.token_id == t for s, t in zip(utt.spans, utt.tokens))
            assert utt.spans[-1].offset_ms <= utt.num_frames * 10

    def test_bad_config(self):
        with pytest.raises(ValueError):
            SyntheticCorpusConfig(min_duration=0)


class TestModel:

    def test_zero_model(self):
        m = ToyModel.zeros(8, 6)
        assert np.all(model_forward(m, np.ones((4, 8))) == 0.0)

    def test_bias_shift(self):
        m = ToyModel.init(8, 6, seed=0)
        feats = np.random.default_rng(0).normal(size=(5, 8))
        before = model_forward(m, feats)
        m.b2[3] += 1.25
        delta = model_forward(m, feats) - before
        np.testing.assert_allclose(delta[:, 3], 1.25, atol=1e-12)
        assert np.all(np.delete(delta, 3, axis=1) == 0.0)

    def test_shape_mismatch(self):
        from ctcprior.errors import ShapeMismatch
        with pytest.raises(ShapeMismatch):
            model_forward(ToyModel.init(8, 6), np.zeros((3, 7)))

    def test_parameter_count(self):
        m = ToyModel.init(8, 6, hidden=32, context=2)
        assert m.num_parameters == 40 * 32 + 32 + 32 * 6 + 6

    def test_jacobian_fd(self):
        rng = np.random.default_rng(1)
        m = ToyModel.init(3, 4, hidden=5, context=1, seed=2)
        feats = rng.normal(size=(3, 3))
        weights = rng.normal(size=(3, 4))
        logits, cache = _forward(m, feats)
        grads = model_backward(m, cache, weights)
        h = 1e-6
        for name in ToyModel.PARAMS:
            arr = getattr(m, name)
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + h
                up = float((model_forward(m, feats) * weights).sum())
                arr[idx] = old - h
                down = float((model_forward(m, feats) * weights).sum())
                arr[idx] = old
                assert grads[name][idx] == pytest.approx((up - down) / (2 * h), rel=1e-6, abs=1e-8)


@pytest.mark.parametrize("alpha", [0.0, 0.3])
def test_end_to_end_gradient(alpha):
    rng = np.random.default_rng(7)
    utt = generate_corpus(SMALL)[0]
    m = ToyModel.init(8, 6, hidden=16, seed=3)
    priors = Priors.from_probs(rng.dirichlet(np.ones(6)), alpha=alpha)
    logits, cache = _forward(m, utt.features)
    _, dlogits = ctc_loss_and_grad(logits, utt.tokens, priors)
    grads = model_backward(m, cache, dlogits)
    direction = {k: rng.normal(size=v.shape) for k, v in m.params().items()}
    predicted = sum(float((grads[k] * direction[k]).sum()) for k in grads)

    def loss_at(eps):
        moved = m.copy()
        for k in ToyModel.PARAMS:
            getattr(moved, k).__iadd__(eps * direction[k])
        return ctc_loss_and_grad(model_forward(moved, utt.features), utt.tokens, priors)[0].loss

    eps = 1e-6
    observed = (loss_at(eps) - loss_at(-eps)) / (2 * eps)
    assert observed == pytest.approx(predicted, rel=1e-4)


class TestTraining:
    CFG = TrainConfig(alpha=0.3, epochs=2, hidden=8)

    def _run(self, cfg=None, **kw):
        corpus = generate_corpus(SMALL)
        return train(corpus, ToyModel.init(8, 6, hidden=8, seed=0), cfg or self.CFG, **kw)

    def test_one_epoch_history(self):
        _, state = self._run(TrainConfig(epochs=1, hidden=8))
        assert len(state.prior_history) == 2
        np.testing.assert_allclose(state.prior_history[0].probs, 1 / 6)
        assert len(state.loss_history) == 1 and state.epoch == 1

    def test_deterministic(self):
        m1, s1 = self._run()
        m2, s2 = self._run()
        assert s1.loss_history == s2.loss_history
        assert s1.priors.log_p.tobytes() == s2.priors.log_p.tobytes()
        assert m1.w1.tobytes() == m2.w1.tobytes()

    def test_priors_carry_alpha(self):
        _, state = self._run()
        assert state.priors.alpha == 0.3
        assert abs(state.priors.probs.sum() - 1) < 1e-9

    def test_input_model_untouched(self):
        m = ToyModel.init(8, 6, hidden=8, seed=0)
        before = m.w2.copy()
        train(generate_corpus(SMALL), m, self.CFG)
        assert np.array_equal(m.w2, before)

    def test_fine_tune_from_checkpoint(self, tmp_path):
        base, state = self._run(TrainConfig(alpha=0.0, epochs=1, hidden=8))
        save_checkpoint(tmp_path / "c.npz", base, state.priors, state.epoch)
        frozen = TrainConfig(alpha=0.3, epochs=1, hidden=8, learning_rate=0.0)
        tuned, _ = train(generate_corpus(SMALL), ToyModel.zeros(8, 6, hidden=8), frozen,
                         init_checkpoint=tmp_path / "c.npz")
        assert np.array_equal(tuned.w1, base.w1)

    def test_ema_mode(self):
        _, state = self._run(TrainConfig(alpha=0.3, epochs=2, hidden=8, update_mode="ema",
                                         estimator="viterbi"))
        assert len(state.prior_history) == 3

    def test_diverged(self):
        m = ToyModel.init(8, 6, hidden=8, seed=0)
        m.w2[0, 0] = np.nan
        with pytest.raises(Diverged) as err:
            train(generate_corpus(SMALL), m, self.CFG)
        assert err.value.epoch == 1


def test_ground_truth_pbe_zero():
    from ctcprior.metrics import UtteranceAlignment, corpus_metrics
    corpus = generate_corpus(SMALL)
    rep = corpus_metrics((UtteranceAlignment(u.utt_id, u.spans),) * 2 for u in corpus)
    assert rep.pbe_ms == 0.0


def test_evaluate_peakiness_fields():
    corpus = generate_corpus(SMALL)
    rep = evaluate_peakiness(ToyModel.zeros(8, 6), corpus, Priors.uniform(6, 0.3))
    assert rep.blank_prior == pytest.approx(1 / 6)
    assert rep.blank_posterior_mass == pytest.approx(1 / 6)
    assert 0 <= rep.blank_frame_fraction <= 1
    assert rep.pdur_frames >= 1.0 and rep.metrics.n_utterances == len(corpus)


def test_checkpoint_round_trip(tmp_path):
    m = ToyModel.init(8, 6, hidden=4, context=1, seed=9)
    pr = Priors.from_probs([0.5, 0.1, 0.1, 0.1, 0.1, 0.1], alpha=0.3)
    save_checkpoint(tmp_path / "c.npz", m, pr, 7)
    m2, pr2, epoch = load_checkpoint(tmp_path / "c.npz")
    assert epoch == 7 and m2.context == 1 and pr2.alpha == 0.3
    for k in ToyModel.PARAMS:
        assert np.array_equal(getattr(m, k), getattr(m2, k))
    assert np.array_equal(pr.log_p, pr2.log_p)


def test_config_round_trip():
    corpus_cfg = SyntheticCorpusConfig(n_utterances=30, noise_std=1.5)
    train_cfg = TrainConfig(alpha=0.3, update_mode="ema")
    assert parse_config(format_config(corpus_cfg, train_cfg)) == (corpus_cfg, train_cfg)
    c, t = parse_config("seed = 3  # both sections\ntrain.seed = 4\nepochs = 2\n")
    assert c.seed == 3 and t.seed == 4 and t.epochs == 2
    with pytest.raises(ValueError):
        parse_config("nonsense = 1\n")
