import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctcprior.errors import EmptyAccumulator, NotNormalized, ShapeMismatch
from ctcprior.priors import (
    PriorAccumulator,
    accumulate_posteriorgram,
    accumulate_viterbi,
    finalize,
    merge,
    update_schedule,
)
from ctcprior.types import Posteriorgram, Priors


def acc_of(weights, total):
    return PriorAccumulator(np.asarray(weights, dtype=float), total)


class TestAccumulate:

    def test_uniform(self):
        acc = accumulate_posteriorgram(PriorAccumulator.empty(2), np.log(np.full((2, 2), 0.5)))
        np.testing.assert_allclose(acc.weights, [1, 1])
        assert acc.total == 2

    def test_one_hot(self):
        acc = accumulate_posteriorgram(PriorAccumulator.empty(2),
                                       Posteriorgram.from_probs([[1, 0], [0, 1]]))
        np.testing.assert_array_equal(acc.weights, [1, 1])

    def test_column_sums(self):
        acc = accumulate_posteriorgram(PriorAccumulator.empty(2), np.log([[0.6, 0.4], [0.3, 0.7]]))
        np.testing.assert_allclose(acc.weights, [0.9, 1.1], atol=1e-15)
        assert acc.total == 2

    def test_rejects_unnormalized(self):
        with pytest.raises(NotNormalized):
            accumulate_posteriorgram(PriorAccumulator.empty(2), np.log([[0.6, 0.6]]))

    def test_rejects_wrong_width(self):
        with pytest.raises(ShapeMismatch):
            accumulate_posteriorgram(PriorAccumulator.empty(3), np.log([[0.5, 0.5]]))

    def test_viterbi_counts(self):
        acc = accumulate_viterbi(PriorAccumulator.empty(2), [0, 1, 0])
        np.testing.assert_array_equal(acc.weights, [2, 1])
        assert acc.total == 3

    def test_viterbi_empty_path(self):
        acc = acc_of([1, 2], 3)
        assert accumulate_viterbi(acc, []) is acc

    def test_viterbi_out_of_range(self):
        with pytest.raises(ShapeMismatch):
            accumulate_viterbi(PriorAccumulator.empty(2), [0, 2])

    def test_concatenated_paths(self):
        a, b = [0, 1, 1, 0], [2, 0, 2]
        whole = accumulate_viterbi(PriorAccumulator.empty(3), a + b)
        split = accumulate_viterbi(accumulate_viterbi(PriorAccumulator.empty(3), a), b)
        np.testing.assert_array_equal(whole.weights, split.weights)
        assert whole.total == split.total


class TestFinalize:

    def test_normalization(self):
        pr = finalize(acc_of([0.9, 1.1], 2))
        np.testing.assert_allclose(pr.probs, [0.45, 0.55], atol=1e-12)

    def test_floor(self):
        pr = finalize(acc_of([2, 0], 2))
        assert pr.probs[1] == pytest.approx(1e-8 / (1 + 1e-8), rel=1e-12)
        assert np.isfinite(pr.log_p).all()

    def test_uniform(self):
        np.testing.assert_allclose(finalize(acc_of([3, 3, 3], 9)).probs, [1 / 3] * 3)

    def test_empty(self):
        with pytest.raises(EmptyAccumulator):
            finalize(PriorAccumulator.empty(3))

    @given(st.lists(st.floats(0, 50), min_size=2, max_size=6))
    def test_always_a_distribution(self, w):
        total = sum(w) + 1.0
        pr = finalize(acc_of(w, total), floor=1e-8)
        assert abs(pr.probs.sum() - 1.0) <= 1e-9
        assert (pr.probs >= 1e-8 / (1 + len(w) * 1e-8) * (1 - 1e-12)).all()


weights = st.lists(st.floats(0, 100), min_size=3, max_size=3)
accs = st.builds(lambda w, t: acc_of(w, t), weights, st.floats(0, 100))


class TestMerge:

    @given(accs)
    def test_identity(self, a):
        m = merge(a, PriorAccumulator.empty(3))
        np.testing.assert_array_equal(m.weights, a.weights)
        assert m.total == a.total

    @given(accs, accs)
    def test_commutative(self, a, b):
        np.testing.assert_array_equal(merge(a, b).weights, merge(b, a).weights)

    @given(accs, accs, accs)
    def test_associative(self, a, b, c):
        left, right = merge(merge(a, b), c), merge(a, merge(b, c))
        np.testing.assert_allclose(left.weights, right.weights, rtol=1e-12, atol=1e-12)
        assert left.total == pytest.approx(right.total, rel=1e-12)

    def test_size_mismatch(self):
        with pytest.raises(ShapeMismatch):
            merge(PriorAccumulator.empty(2), PriorAccumulator.empty(3))

    @settings(max_examples=30)
    @given(st.integers(0, 2**32 - 1))
    def test_merge_then_finalize(self, seed):
        rng = np.random.default_rng(seed)
        grams = [np.log(rng.dirichlet(np.ones(4), size=int(rng.integers(1, 7)))) for _ in range(5)]
        seq = PriorAccumulator.empty(4)
        for g in grams:
            seq = accumulate_posteriorgram(seq, g)
        a = b = PriorAccumulator.empty(4)
        for g in grams[:2]:
            a = accumulate_posteriorgram(a, g)
        for g in grams[2:]:
            b = accumulate_posteriorgram(b, g)
        np.testing.assert_allclose(finalize(merge(a, b)).probs, finalize(seq).probs,
                                   rtol=0, atol=1e-12)


class TestSchedule:
    CUR = Priors.from_probs([0.2, 0.3, 0.5])
    NEW = Priors.from_probs([0.6, 0.3, 0.1])

    @pytest.mark.parametrize("mode", ["replace", "ema"])
    def test_epoch_zero_uniform(self, mode):
        pr = update_schedule(0, self.CUR, self.NEW, mode=mode)
        np.testing.assert_allclose(pr.probs, [1 / 3] * 3)

    def test_replace(self):
        assert update_schedule(3, self.CUR, self.NEW) is self.NEW

    def test_ema_degenerate(self):
        np.testing.assert_allclose(update_schedule(2, self.CUR, self.NEW, "ema", 1.0).log_p,
                                   self.CUR.log_p, atol=1e-15)
        np.testing.assert_allclose(update_schedule(2, self.CUR, self.NEW, "ema", 0.0).log_p,
                                   self.NEW.log_p, atol=1e-15)

    def test_ema_geometric(self):
        pr = update_schedule(1, self.CUR, self.NEW, "ema", 0.5)
        raw = np.sqrt(self.CUR.probs * self.NEW.probs)
        np.testing.assert_allclose(pr.probs, raw / raw.sum(), rtol=1e-12)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            update_schedule(-1, self.CUR, self.NEW)
        with pytest.raises(ValueError):
            update_schedule(1, self.CUR, self.NEW, mode="average")


def test_estimators_agree_on_one_hot_corpus():
    rng = np.random.default_rng(5)
    marginal = viterbi = PriorAccumulator.empty(4)
    for _ in range(10):
        labels = rng.integers(0, 4, size=int(rng.integers(1, 12)))
        marginal = accumulate_posteriorgram(marginal, Posteriorgram.from_probs(np.eye(4)[labels]))
        viterbi = accumulate_viterbi(viterbi, labels)
    np.testing.assert_array_equal(finalize(marginal).log_p, finalize(viterbi).log_p)
