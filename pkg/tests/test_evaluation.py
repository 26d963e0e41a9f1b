import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linear_sum_assignment

from elmvis.elm import hidden_layer, init_model, projection_matrix
from elmvis.evaluation import OracleReport, best_permutation_accuracy, confusion, \
    confusion_percent, delta_error, exact_recovery, metrics_document, oracle_similarity, \
    oracle_resolution, oracle_trials, reconstruction_accuracy, region_purity
from elmvis.swap import init_state


class TestOracle:
    def test_full_rank_is_frobenius_norm(self):
        rng = np.random.default_rng(0)
        V, X = rng.standard_normal((5, 3)), rng.standard_normal((5, 2))
        model = init_model(3, 12, "tanh", 1)
        assert oracle_similarity(model, V, X) == pytest.approx(np.sum(X**2), rel=1e-9)

    def test_zero_targets(self):
        V = np.random.default_rng(1).standard_normal((6, 2))
        assert oracle_similarity(init_model(2, 3, "sigmoid", 0), V, np.zeros((6, 4))) == 0.0

    def test_agrees_with_init_state(self):
        rng = np.random.default_rng(2)
        V, X = rng.standard_normal((25, 3)), rng.standard_normal((25, 4))
        model = init_model(3, 7, "tanh", 5)
        S = init_state(projection_matrix(hidden_layer(model, V)), X).S
        assert abs(oracle_similarity(model, V, X) - S) <= 1e-10 * abs(S)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            oracle_similarity(init_model(2, 3), np.zeros((4, 2)), np.zeros((5, 1)))

    def test_report_floor(self):
        assert OracleReport(0.0, 1e-12).rel_error == pytest.approx(1e-2)
        assert OracleReport(2.0, 1.0).rel_error == 0.5

    def test_delta_error_floor(self):
        assert delta_error(1e-12, 0.0) == 0.0
        assert delta_error(1.1, 1.0) == pytest.approx(0.1)
        assert delta_error(1e-6, 0.0, floor=1e-5) == 0.0

    def test_resolution_grows_with_conditioning(self):
        good = np.eye(4)
        bad = np.diag([1.0, 1.0, 1.0, 1e-8])
        assert oracle_resolution(good, 10.0) == pytest.approx(1e-9)
        assert oracle_resolution(bad, 10.0) > 1e-7
        # singular values below the rank cut do not count
        assert oracle_resolution(np.diag([1.0, 1e-12]), 1.0) == 1e-10

    def test_wrong_formula_is_caught(self):
        rng = np.random.default_rng(8)
        V, X = rng.standard_normal((12, 3)), rng.standard_normal((12, 2))
        model = init_model(3, 5, "tanh", 2)
        H = hidden_layer(model, V)
        A = projection_matrix(H)
        state = init_state(A, X)
        delta = rng.standard_normal(2)
        X1 = X.copy()
        X1[4] += delta
        S0 = oracle_similarity(model, V, X)
        oracle = oracle_similarity(model, V, X1) - S0
        floor = oracle_resolution(H, S0)
        right = A[4, 4] * delta @ delta + 2 * state.Xhat[4] @ delta
        wrong = A[4, 4] * delta @ delta + state.Xhat[4] @ delta
        assert delta_error(right, oracle, floor) <= 1e-7
        assert delta_error(wrong, oracle, floor) > 1e-3

    def test_trials(self):
        summary = oracle_trials(200, seed=3)
        assert summary.trials == 200
        assert summary.max_error <= 1e-7
        with pytest.raises(ValueError):
            oracle_trials(0)

    def test_trials_reproducible(self):
        assert oracle_trials(20, seed=9) == oracle_trials(20, seed=9)


class TestConfusion:
    def test_diagonal(self):
        labels = [0, 1, 2, 2, 1, 0, 0]
        cm = confusion(labels, labels, 3)
        np.testing.assert_array_equal(cm, np.diag([3, 2, 2]))
        np.testing.assert_array_equal(confusion_percent(cm), 100 * np.eye(3))

    def test_crossed(self):
        cm = confusion([0, 0, 1, 1, 1], [1, 1, 0, 0, 0], 2)
        np.testing.assert_array_equal(cm, [[0, 2], [3, 0]])

    def test_one_error(self):
        cm = confusion([0, 1, 2, 2], [0, 1, 2, 0], 3)
        expected = np.eye(3, dtype=int)
        expected[2, 0] = 1
        np.testing.assert_array_equal(cm, expected)
        assert cm.sum(axis=1).tolist() == [1, 1, 2]

    def test_percent_empty_row(self):
        pct = confusion_percent([[2, 2], [0, 0]])
        np.testing.assert_array_equal(pct, [[50, 50], [0, 0]])

    @pytest.mark.parametrize("t,a", [([0, 3], [0, 1]), ([0, 1], [0, -1]), ([0, 1], [0])])
    def test_errors(self, t, a):
        with pytest.raises(ValueError):
            confusion(t, a, 3)


class TestBestPermutation:
    def test_diagonal(self):
        assert best_permutation_accuracy(np.diag([5, 3, 9])) == (1.0, (0, 1, 2))

    def test_swap(self):
        assert best_permutation_accuracy([[0, 100], [100, 0]]) == (1.0, (1, 0))

    def test_against_assignment_solver(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            cm = rng.integers(0, 50, size=(4, 4))
            acc, perm = best_permutation_accuracy(cm)
            rows, cols = linear_sum_assignment(cm, maximize=True)
            best = cm[rows, cols].sum()
            assert acc == pytest.approx(best / cm.sum())
            assert cm[np.arange(4), list(perm)].sum() == best

    def test_exhaustive_small(self):
        cm = np.array([[1, 7, 2], [6, 1, 0], [0, 3, 4]])
        best = max(itertools.permutations(range(3)), key=lambda p: cm[range(3), p].sum())
        assert best_permutation_accuracy(cm) == (17 / 24, best)

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            cm = rng.integers(0, 1000, size=(5, 5))
            sigma = rng.permutation(5)
            acc, perm = best_permutation_accuracy(cm)
            acc2, perm2 = best_permutation_accuracy(cm[:, sigma])
            assert acc == acc2
            scores = [cm[range(5), p].sum() for p in itertools.permutations(range(5))]
            if scores.count(max(scores)) == 1:
                # column j of the relabelled matrix is old column sigma[j]
                assert [int(sigma[j]) for j in perm2] == list(perm)

    def test_too_many_classes(self):
        with pytest.raises(OverflowError, match="reduce"):
            best_permutation_accuracy(np.eye(11))

    def test_ten_classes_allowed(self):
        cm = np.eye(10, dtype=int)[::-1] * 3
        acc, perm = best_permutation_accuracy(cm)
        assert acc == 1.0 and perm == tuple(range(9, -1, -1))

    def test_non_square(self):
        with pytest.raises(ValueError):
            best_permutation_accuracy(np.zeros((2, 3)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=60))
def test_identical_labels_give_full_accuracy(labels):
    assert best_permutation_accuracy(confusion(labels, labels, 5))[0] == 1.0


class TestReconstruction:
    def test_perfect(self):
        perm = np.random.default_rng(6).permutation(12)
        labels = np.arange(12) % 3
        assert reconstruction_accuracy(perm, perm, labels) == 1.0
        assert exact_recovery(perm, perm) == 1.0

    def test_hand_count(self):
        labels = np.array([0, 0, 0, 0, 0, 1, 1, 1, 1, 1])
        truth = np.arange(10)
        final = np.array([1, 0, 6, 3, 4, 5, 2, 7, 9, 8])
        # position 2 gets a class-1 sample, position 6 a class-0 one: 8 of 10 right
        assert reconstruction_accuracy(final, truth, labels) == 0.8
        # exact matches at positions 3, 4, 5, 7
        assert exact_recovery(final, truth) == 0.4

    def test_random_is_about_half(self):
        labels = np.repeat([0, 1], 100)
        accs = [reconstruction_accuracy(np.random.default_rng(s).permutation(200),
                                        np.arange(200), labels) for s in range(50)]
        assert abs(np.mean(accs) - 0.5) < 0.03

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            reconstruction_accuracy([0, 1], [0, 1, 2], [0, 1, 0])
        with pytest.raises(ValueError):
            exact_recovery([0, 1], [0])


def test_region_purity():
    purity = region_purity([0, 0, 1, 1, 1], [0, 1, 1, 1, 0])
    np.testing.assert_allclose(purity, [0.5, 2 / 3])


def test_metrics_document():
    doc = metrics_document([[3, 1], [0, 4]], [(8, 1.5), (16, 2.0)], n_fixed=16)
    assert doc == {"confusion": [[3, 1], [0, 4]], "best_perm": [0, 1], "accuracy": 7 / 8,
                   "S_history": [[8, 1.5], [16, 2.0]], "n_fixed": 16}
