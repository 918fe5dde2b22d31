import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cflforge.data import make_split_tasks, synth_dataset
from cflforge.metrics import (
    AccuracyMatrix,
    avg_accuracy,
    avg_forgetting,
    bwt,
    evaluate_row,
    fwt,
)
from cflforge.model import ModelSpec


def filled_matrix(values, baseline=None):
    values = np.asarray(values, dtype=np.float64)
    m = AccuracyMatrix(n_tasks=values.shape[0])
    for t in range(values.shape[0]):
        m.set_row(t, values[t])
    if baseline is not None:
        m.baseline = np.asarray(baseline, dtype=np.float64)
    return m


def random_matrix(rng, t=8):
    return filled_matrix(rng.uniform(0, 100, size=(t, t)), rng.uniform(0, 100, size=t))


# brute-force oracles: literal double loops over the formulas, 1-indexed

def brute_acc(a, t):
    return sum(a[t - 1][i - 1] for i in range(1, t + 1)) / t


def brute_fgt(a, t):
    total = 0.0
    for i in range(1, t):
        best = max(a[j - 1][i - 1] for j in range(1, t))
        total += best - a[t - 1][i - 1]
    return total / (t - 1)


def brute_bwt(a, big_t):
    return sum(a[big_t - 1][i - 1] - a[i - 1][i - 1] for i in range(1, big_t)) / (big_t - 1)


def brute_fwt(a, baseline, big_t):
    return sum(a[i - 2][i - 1] - baseline[i - 1] for i in range(2, big_t + 1)) / (big_t - 1)


class TestAvgAccuracy:
    def test_two_task_mean(self):
        m = filled_matrix([[60.0, 0.0], [60.0, 90.0]])
        assert avg_accuracy(m, 1) == pytest.approx(75.0)

    def test_first_task(self):
        m = filled_matrix([[42.0, 10.0], [1.0, 2.0]])
        assert avg_accuracy(m, 0) == pytest.approx(42.0)

    def test_constant_matrix(self):
        m = filled_matrix(np.full((4, 4), 80.0))
        for t in range(4):
            assert avg_accuracy(m, t) == pytest.approx(80.0)

    def test_unfilled_row_rejected(self):
        m = AccuracyMatrix(n_tasks=3)
        m.set_row(0, [50.0, 50.0, 50.0])
        with pytest.raises(ValueError):
            avg_accuracy(m, 1)


class TestAvgForgetting:
    def test_simple_drop(self):
        m = filled_matrix([[80.0, 0.0], [60.0, 70.0]])
        assert avg_forgetting(m, 1) == pytest.approx(20.0)

    def test_three_task_hand_case(self):
        values = np.zeros((3, 3))
        values[0] = [80.0, 10.0, 0.0]
        values[1] = [70.0, 90.0, 0.0]
        values[2] = [60.0, 85.0, 50.0]
        m = filled_matrix(values)
        assert avg_forgetting(m, 2) == pytest.approx(12.5)

    def test_needs_two_tasks(self):
        m = filled_matrix([[50.0, 50.0], [50.0, 50.0]])
        with pytest.raises(ValueError):
            avg_forgetting(m, 0)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            m = random_matrix(rng)
            for t in range(1, 8):
                assert avg_forgetting(m, t) == pytest.approx(
                    brute_fgt(m.values, t + 1), abs=1e-12
                )

    def test_seen_only_variant(self):
        # accuracy on task 1 was higher before it was trained; the literal
        # formula counts that, the seen_only flag does not
        values = np.zeros((2, 2))
        values[0] = [50.0, 90.0]
        values[1] = [40.0, 60.0]
        m = filled_matrix(values)
        assert avg_forgetting(m, 1) == pytest.approx(10.0)
        assert avg_forgetting(m, 1, seen_only=True) == pytest.approx(10.0)
        values3 = np.zeros((3, 3))
        values3[0] = [50.0, 90.0, 0.0]
        values3[1] = [40.0, 60.0, 0.0]
        values3[2] = [30.0, 50.0, 80.0]
        m3 = filled_matrix(values3)
        # literal: task 2's best is 90 (before training); seen_only: best is 60
        assert avg_forgetting(m3, 2) == pytest.approx(((50 - 30) + (90 - 50)) / 2)
        assert avg_forgetting(m3, 2, seen_only=True) == pytest.approx(
            ((50 - 30) + (60 - 50)) / 2
        )


class TestTransfers:
    def test_bwt_two_tasks(self):
        m = filled_matrix([[80.0, 0.0], [60.0, 50.0]])
        assert bwt(m) == pytest.approx(-20.0)

    def test_bwt_zero_when_diagonal_held(self):
        rng = np.random.default_rng(1)
        values = rng.uniform(0, 100, size=(4, 4))
        values[3, :3] = np.diag(values)[:3]
        m = filled_matrix(values)
        assert bwt(m) == pytest.approx(0.0, abs=1e-12)

    def test_fwt_two_tasks(self):
        m = filled_matrix([[0.0, 15.0], [0.0, 0.0]], baseline=[0.0, 10.0])
        assert fwt(m) == pytest.approx(5.0)

    def test_fwt_zero_at_baseline(self):
        rng = np.random.default_rng(2)
        values = rng.uniform(0, 100, size=(5, 5))
        baseline = np.zeros(5)
        for i in range(1, 5):
            baseline[i] = values[i - 1, i]
        m = filled_matrix(values, baseline=baseline)
        assert fwt(m) == pytest.approx(0.0, abs=1e-12)

    def test_single_task_rejected(self):
        values = np.array([[50.0]])
        m = filled_matrix(values, baseline=[10.0])
        with pytest.raises(ValueError):
            bwt(m)
        with pytest.raises(ValueError):
            fwt(m)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_all_metrics_match_bruteforce(seed):
    rng = np.random.default_rng(seed)
    m = random_matrix(rng)
    for t in range(8):
        assert avg_accuracy(m, t) == pytest.approx(brute_acc(m.values, t + 1), abs=1e-12)
    assert bwt(m) == pytest.approx(brute_bwt(m.values, 8), abs=1e-12)
    assert fwt(m) == pytest.approx(brute_fwt(m.values, m.baseline, 8), abs=1e-12)


class TestEvaluateRow:
    def _stream(self):
        base = synth_dataset(6, 4, 8, 0.05, 3)
        return make_split_tasks(base, 2)

    def _constant_model(self, spec, winner):
        params = np.zeros(spec.n_params)
        params[spec.n_params - spec.n_classes + winner] = 10.0
        return params

    def test_constant_predictor_scores_class_share(self):
        stream = self._stream()
        spec = ModelSpec(layer_sizes=(8, 4))
        params = self._constant_model(spec, 0)
        row = evaluate_row(spec, params, stream, "class_il")
        assert row[0] == pytest.approx(50.0)  # task 0 holds classes {0, 1}
        assert row[1] == pytest.approx(0.0)

    def test_task_il_tie_break_gives_lowest_class(self):
        stream = self._stream()
        spec = ModelSpec(layer_sizes=(8, 4))
        row = evaluate_row(spec, np.zeros(spec.n_params), stream, "task_il")
        # all-equal logits predict the lower class of each pair: half right
        assert row[0] == pytest.approx(50.0)
        assert row[1] == pytest.approx(50.0)

    def test_task_masking_beats_class_il_for_within_task_model(self):
        # a model perfect within tasks but confused across them: task 1 logits
        # always dominate, so class-IL sends every task-0 sample to task 1
        stream = self._stream()
        spec = ModelSpec(layer_sizes=(8, 4))
        rng = np.random.default_rng(0)
        # least-squares probe toward shifted one-hot targets builds the model
        xs = np.vstack([t.train.images for t in stream.tasks])
        ys = np.concatenate([t.train.labels for t in stream.tasks])
        targets = np.eye(4)[ys] * 2.0
        targets[:, 2:] += 5.0  # task-1 classes always outscore task-0 classes
        coef, *_ = np.linalg.lstsq(np.hstack([xs, np.ones((len(xs), 1))]), targets, rcond=None)
        params = np.concatenate([coef[:-1].ravel(), coef[-1]])
        task_row = evaluate_row(spec, params, stream, "task_il")
        class_row = evaluate_row(spec, params, stream, "class_il")
        assert task_row[0] == pytest.approx(100.0)
        assert class_row[0] < 100.0

    def test_deterministic(self):
        stream = self._stream()
        spec = ModelSpec(layer_sizes=(8, 4))
        params = np.linspace(-1, 1, spec.n_params)
        a = evaluate_row(spec, params, stream, "domain_il")
        b = evaluate_row(spec, params, stream, "domain_il")
        assert np.array_equal(a, b)
