import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from igcn.metrics import ConfusionMatrix, classification_report, confusion, largest_remainder, metrics, stratified_split
from oracles import brute_metrics, largest_remainder_brute


class TestConfusion:
    def test_identity(self):
        np.testing.assert_array_equal(confusion([0, 1, 2], [0, 1, 2], 3).counts, np.eye(3))

    def test_tally(self):
        np.testing.assert_array_equal(confusion([0, 0, 1, 1], [0, 1, 1, 1], 2).counts, [[1, 1], [0, 2]])

    def test_empty(self):
        with pytest.raises(ValueError):
            confusion([], [], 2)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            confusion([0, 3], [0, 1], 3)

    def test_total(self):
        conf = confusion([0, 1, 1, 2, 2, 2], [2, 1, 0, 2, 2, 1], 3)
        assert conf.total == 6


class TestMetrics:
    def test_perfect(self):
        rep = metrics(ConfusionMatrix(np.diag([3, 4, 5])))
        assert rep.as_tuple() == (1.0, 1.0, 1.0, 1.0)

    def test_binary_hand_values(self):
        rep = metrics(ConfusionMatrix(np.array([[2, 1], [1, 2]])))
        for got in (rep.accuracy, rep.macro_f1, rep.weighted_f1):
            assert got == pytest.approx(0.6667, abs=1e-4)
        assert rep.mcc == pytest.approx(0.3333, abs=1e-4)
        assert rep.mcc == pytest.approx((2 * 2 - 1 * 1) / 9, abs=1e-15)

    def test_single_predicted_class(self):
        rep = classification_report([0, 0, 1, 1], [1, 1, 1, 1], 2)
        assert rep.mcc == 0.0
        assert rep.macro_f1 == pytest.approx((0 + 2 / 3) / 2)

    def test_empty_confusion(self):
        with pytest.raises(ValueError):
            metrics(ConfusionMatrix(np.zeros((2, 2), dtype=int)))

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        c = int(rng.integers(2, 6))
        counts = rng.integers(0, 12, size=(c, c))
        counts[0, 0] += 1
        rep = metrics(ConfusionMatrix(counts))
        ref = brute_metrics(counts.tolist())
        for name in rep.FIELDS:
            assert getattr(rep, name) == pytest.approx(ref[name], abs=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 5), st.integers(0, 2**32 - 1))
    def test_invariants(self, c, seed):
        rng = np.random.default_rng(seed)
        counts = rng.integers(0, 9, size=(c, c))
        counts[0, 0] += 1
        rep = metrics(ConfusionMatrix(counts))
        assert 0 <= rep.accuracy <= 1 and 0 <= rep.macro_f1 <= 1 and 0 <= rep.weighted_f1 <= 1
        assert -1 - 1e-12 <= rep.mcc <= 1 + 1e-12
        # transpose symmetry of the multiclass MCC
        assert metrics(ConfusionMatrix(counts.T)).mcc == pytest.approx(rep.mcc, abs=1e-12)
        # macro F1 invariant under relabelling classes
        perm = rng.permutation(c)
        permuted = counts[np.ix_(perm, perm)]
        assert metrics(ConfusionMatrix(permuted)).macro_f1 == pytest.approx(rep.macro_f1, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 6), st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_self_agreement_is_perfect(self, c, reps, seed):
        y = np.random.default_rng(seed).permutation(np.repeat(np.arange(c), reps))
        assert classification_report(y, y, c).as_tuple() == (1.0, 1.0, 1.0, 1.0)

    def test_weighted_equals_macro_for_balanced_support(self):
        rng = np.random.default_rng(1)
        counts = rng.integers(0, 6, size=(4, 4))
        # rescale each row to the same support by adding to the diagonal
        counts[np.diag_indices(4)] += counts.sum(axis=1).max() - counts.sum(axis=1)
        rep = metrics(ConfusionMatrix(counts))
        assert rep.weighted_f1 == pytest.approx(rep.macro_f1, abs=1e-12)


class TestSplit:
    def test_exact_proportions(self):
        labels = np.repeat([0, 1], 5)
        s = stratified_split(labels, seed=0)
        for cls in (0, 1):
            assert [int(np.sum(labels[part] == cls)) for part in (s.train, s.val, s.test)] == [3, 1, 1]

    def test_deterministic(self):
        labels = np.random.default_rng(0).integers(0, 4, size=80)
        assert stratified_split(labels, seed=5) == stratified_split(labels, seed=5)
        assert stratified_split(labels, seed=5) != stratified_split(labels, seed=6)

    def test_uneven_classes_against_brute_force(self):
        labels = np.array([0] * 7 + [1] * 3)
        s = stratified_split(labels, seed=1)
        for cls, n in ((0, 7), (1, 3)):
            sizes = [int(np.sum(labels[part] == cls)) for part in (s.train, s.val, s.test)]
            assert sizes == largest_remainder_brute(n, (0.6, 0.2, 0.2))
        # 7 -> quotas 4.2/1.4/1.4, 3 -> 1.8/0.6/0.6
        assert largest_remainder(7, (0.6, 0.2, 0.2)) == [4, 2, 1]
        assert largest_remainder(3, (0.6, 0.2, 0.2)) == [2, 1, 0]

    @pytest.mark.parametrize("n", range(3, 40))
    def test_largest_remainder_oracle(self, n):
        for ratios in ((0.6, 0.2, 0.2), (0.5, 0.25, 0.25), (0.7, 0.2, 0.1)):
            assert largest_remainder(n, ratios) == largest_remainder_brute(n, ratios)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(3, 20), min_size=1, max_size=5), st.integers(0, 1000))
    def test_partition(self, sizes, seed):
        labels = np.repeat(np.arange(len(sizes)), sizes)
        s = stratified_split(labels, seed=seed)
        union = np.concatenate([s.train, s.val, s.test])
        assert np.array_equal(np.sort(union), np.arange(labels.size))

    def test_small_class_rejected(self):
        with pytest.raises(ValueError):
            stratified_split([0, 0, 0, 1, 1], seed=0)

    def test_bad_ratios(self):
        with pytest.raises(ValueError):
            stratified_split([0, 0, 0], ratios=(0.5, 0.5, 0.5))
