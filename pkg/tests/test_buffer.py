import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cflforge.buffer import (
    BufferEmptyError,
    MalformedBufferError,
    ReplayBuffer,
    insert_batch,
    items_to_batch,
    sample,
)
from cflforge.model import Batch


def batch_of(values, logits=False):
    values = list(values)
    return Batch(
        inputs=np.array([[float(v)] for v in values]),
        labels=np.array([int(v) % 2 for v in values]),
        logits=np.array([[float(v), 0.0] for v in values]) if logits else None,
    )


def stored_values(buffer):
    return [item.x[0] for item in buffer.items]


class TestInsert:
    def test_under_capacity_fill(self):
        buf = ReplayBuffer(capacity=5)
        insert_batch(buf, batch_of([1, 2, 3]), "reservoir", np.random.default_rng(0))
        assert stored_values(buf) == [1, 2, 3]
        assert buf.observed == 3

    def test_new_item_frequency_matches_reservoir_rule(self):
        # Monte Carlo oracle: with n=5 stored of capacity 5, a sixth item
        # lands with probability 5/6
        hits = 0
        trials = 60_000
        rng = np.random.default_rng(123)
        for _ in range(trials):
            buf = ReplayBuffer(capacity=5)
            insert_batch(buf, batch_of([0, 1, 2, 3, 4]), "reservoir", rng)
            insert_batch(buf, batch_of([99]), "reservoir", rng)
            hits += 99.0 in stored_values(buf)
        assert hits / trials == pytest.approx(5.0 / 6.0, abs=0.01)

    def test_sliding_window_keeps_latest(self):
        buf = ReplayBuffer(capacity=3)
        for v in (1, 2, 3, 4, 5):
            insert_batch(buf, batch_of([v]), "sliding_window", np.random.default_rng(0))
        assert sorted(stored_values(buf)) == [3, 4, 5]
        assert buf.observed == 5

    def test_random_replace_always_overwrites(self):
        rng = np.random.default_rng(7)
        buf = ReplayBuffer(capacity=2)
        insert_batch(buf, batch_of([1, 2]), "random_replace", rng)
        insert_batch(buf, batch_of([3]), "random_replace", rng)
        vals = stored_values(buf)
        assert 3.0 in vals and len(vals) == 2

    def test_observed_counts_identical_across_policies(self):
        for policy in ("reservoir", "sliding_window", "random_replace"):
            buf = ReplayBuffer(capacity=2)
            insert_batch(buf, batch_of(range(7)), policy, np.random.default_rng(1))
            assert buf.observed == 7
            assert len(buf) == 2

    def test_deterministic_given_rng_state(self):
        def run():
            rng = np.random.default_rng(42)
            buf = ReplayBuffer(capacity=3)
            insert_batch(buf, batch_of(range(20)), "reservoir", rng)
            return stored_values(buf)

        assert run() == run()

    def test_empty_batch_rejected(self):
        buf = ReplayBuffer(capacity=3)
        empty = batch_of([1])
        empty.inputs = np.zeros((0, 1))
        empty.labels = np.zeros(0, dtype=np.int64)
        with pytest.raises(ValueError):
            insert_batch(buf, empty, "reservoir", np.random.default_rng(0))

    def test_logits_stored_alongside(self):
        buf = ReplayBuffer(capacity=4)
        insert_batch(buf, batch_of([1, 2], logits=True), "reservoir", np.random.default_rng(0))
        assert all(item.z is not None for item in buf.items)

    @settings(max_examples=40, deadline=None)
    @given(
        st.integers(1, 8),
        st.lists(st.integers(1, 5), min_size=1, max_size=6),
        st.sampled_from(["reservoir", "sliding_window", "random_replace"]),
        st.integers(0, 2**32 - 1),
    )
    def test_size_invariant(self, capacity, batch_sizes, policy, seed):
        rng = np.random.default_rng(seed)
        buf = ReplayBuffer(capacity=capacity)
        total = 0
        for size in batch_sizes:
            insert_batch(buf, batch_of(range(total, total + size)), policy, rng)
            total += size
            assert len(buf) == min(total, capacity)
            assert buf.observed == total


class TestSample:
    def test_single_item_returned_once(self):
        buf = ReplayBuffer(capacity=5)
        insert_batch(buf, batch_of([7]), "reservoir", np.random.default_rng(0))
        got = sample(buf, 4, np.random.default_rng(1))
        assert len(got) == 1 and got[0].x[0] == 7.0

    def test_full_draw_is_permutation(self):
        buf = ReplayBuffer(capacity=5)
        insert_batch(buf, batch_of([1, 2, 3, 4, 5]), "reservoir", np.random.default_rng(0))
        got = sample(buf, 5, np.random.default_rng(2))
        assert sorted(item.x[0] for item in got) == [1, 2, 3, 4, 5]

    def test_empty_buffer_signals(self):
        with pytest.raises(BufferEmptyError):
            sample(ReplayBuffer(capacity=3), 1, np.random.default_rng(0))

    def test_inclusion_uniformity(self):
        # Monte Carlo oracle: inclusion frequency of each item is m/len(items)
        buf = ReplayBuffer(capacity=10)
        insert_batch(buf, batch_of(range(10)), "reservoir", np.random.default_rng(0))
        rng = np.random.default_rng(99)
        counts = np.zeros(10)
        draws = 50_000
        for _ in range(draws):
            for item in sample(buf, 3, rng):
                counts[int(item.x[0])] += 1
        freqs = counts / draws
        assert np.all(np.abs(freqs - 0.3) < 0.01)


class TestItemsToBatch:
    def test_missing_logits_flagged(self):
        buf = ReplayBuffer(capacity=3)
        insert_batch(buf, batch_of([1, 2]), "reservoir", np.random.default_rng(0))
        with pytest.raises(MalformedBufferError):
            items_to_batch(buf.items, require_logits=True)

    def test_roundtrip(self):
        buf = ReplayBuffer(capacity=3)
        insert_batch(buf, batch_of([1, 2], logits=True), "reservoir", np.random.default_rng(0))
        got = items_to_batch(buf.items)
        assert got.inputs.shape == (2, 1)
        assert got.logits.shape == (2, 2)
