"""Federated averaging algebra and the broadcast round."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fedra.agent import DqnAgent, TrainConfig
from fedra.env import SuccessTracker
from fedra.fed import (
    DegenerateCoefficientsError,
    average_by_memory,
    average_by_success,
    run_averaging_round,
)
from fedra.mlp import MlpSpec, flatten_weights, forward

model_vectors = hnp.arrays(
    np.float64,
    st.shared(st.integers(1, 12), key="dim"),
    elements=st.floats(-100.0, 100.0, allow_nan=False),
)


class TestAverageByMemory:
    def test_idempotent_on_identical_models(self):
        w = np.array([0.1, -2.7, 3.3333])
        out = average_by_memory([w, w.copy(), w.copy()], [11, 5, 900])
        assert np.array_equal(out, w)

    def test_weighted_mean_arithmetic(self):
        out = average_by_memory([np.array([1.0, 3.0]), np.array([3.0, 5.0])], [1, 3])
        assert np.array_equal(out, [2.5, 4.5])

    def test_zero_size_excludes_model(self):
        w1, w2 = np.array([1.0, 2.0]), np.array([100.0, 200.0])
        assert np.array_equal(average_by_memory([w1, w2], [1, 0]), w1)

    def test_all_zero_sizes_raise(self):
        with pytest.raises(DegenerateCoefficientsError):
            average_by_memory([np.zeros(2), np.zeros(2)], [0, 0])

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            average_by_memory([np.zeros(2), np.zeros(3)], [1, 1])


class TestAverageBySuccess:
    def test_equal_rates_match_equal_memories_and_plain_mean(self):
        models = [np.array([1.0, 2.0]), np.array([3.0, 6.0]),
                  np.array([5.0, 10.0]), np.array([7.0, 14.0])]
        by_eta = average_by_success(models, [0.7, 0.7, 0.7, 0.7])
        by_mem = average_by_memory(models, [5000, 5000, 5000, 5000])
        plain = np.mean(models, axis=0)
        assert np.array_equal(by_eta, by_mem)
        assert np.array_equal(by_eta, plain)
        assert np.array_equal(by_eta, [4.0, 8.0])

    def test_single_positive_rate_selects_model(self):
        models = [np.array([1.0, -1.0]), np.array([2.0, 3.0]),
                  np.array([4.0, 4.0]), np.array([8.0, 9.0])]
        assert np.array_equal(average_by_success(models, [1.0, 0.0, 0.0, 0.0]), models[0])

    def test_all_zero_rates_fall_back_to_uniform(self):
        models = [np.array([1.0, 2.0]), np.array([3.0, 6.0]),
                  np.array([5.0, 10.0]), np.array([7.0, 14.0])]
        out = average_by_success(models, [0.0, 0.0, 0.0, 0.0])
        assert np.array_equal(out, [4.0, 8.0])

    def test_rejects_rates_outside_unit_interval(self):
        with pytest.raises(ValueError):
            average_by_success([np.zeros(2)], [1.5])


class TestAveragingProperties:
    @given(
        models=st.lists(model_vectors, min_size=2, max_size=5),
        raw=st.lists(st.floats(0.0, 1.0), min_size=5, max_size=5),
    )
    @settings(max_examples=200)
    def test_convex_combination_bounds(self, models, raw):
        etas = raw[: len(models)]
        out = average_by_success(models, etas)
        stack = np.stack(models)
        assert (out >= stack.min(axis=0)).all()
        assert (out <= stack.max(axis=0)).all()

    @given(models=st.lists(model_vectors, min_size=2, max_size=4), power=st.integers(-6, 6))
    @settings(max_examples=100)
    def test_scale_equivariance_exact_for_powers_of_two(self, models, power):
        scalar = 2.0 ** power
        sizes = list(range(1, len(models) + 1))
        direct = average_by_memory([scalar * m for m in models], sizes)
        after = scalar * average_by_memory(models, sizes)
        assert np.array_equal(direct, after)

    @given(
        models=st.lists(model_vectors, min_size=2, max_size=4),
        scalar=st.floats(0.01, 100.0),
    )
    @settings(max_examples=100)
    def test_scale_equivariance_approximate_generally(self, models, scalar):
        sizes = list(range(1, len(models) + 1))
        direct = average_by_memory([scalar * m for m in models], sizes)
        after = scalar * average_by_memory(models, sizes)
        assert np.allclose(direct, after, rtol=1e-9, atol=1e-9)

    @given(models=st.lists(model_vectors, min_size=2, max_size=4), k=st.integers(1, 50))
    @settings(max_examples=100)
    def test_coefficient_rescaling_invariance(self, models, k):
        # eta_i versus raw counts xi_i = eta_i * total: same normalized weights
        counts = list(range(1, len(models) + 1))
        scaled = [c * k for c in counts]
        assert np.array_equal(average_by_memory(models, counts),
                              average_by_memory(models, scaled))

    @given(models=st.lists(model_vectors, min_size=2, max_size=4))
    @settings(max_examples=50)
    def test_idempotence_any_coefficients(self, models):
        w = models[0]
        copies = [w.copy() for _ in models]
        sizes = list(range(1, len(models) + 1))
        assert np.array_equal(average_by_memory(copies, sizes), w)


class TestAveragingRound:
    def make_agents(self, n=4):
        return [DqnAgent(MlpSpec((3, 6, 4)), TrainConfig(batch_size=2, replay_capacity=8),
                         seed=s) for s in range(n)]

    def test_broadcast_aligns_all_agents(self):
        agents = self.make_agents()
        tracker = SuccessTracker(4)
        tracker.update(np.array([True, False, True, True]))
        event = run_averaging_round(agents, "success", tracker, event_index=1)
        x = np.random.default_rng(0).standard_normal(3).astype(np.float32)
        outs = [forward(a.eval_weights, x) for a in agents]
        for out in outs[1:]:
            assert np.array_equal(out, outs[0])
        for a in agents:
            assert np.array_equal(flatten_weights(a.eval_weights),
                                  flatten_weights(a.target_weights))
        assert event.rule == "success"
        assert sum(event.coefficients) == pytest.approx(1.0)

    def test_uniform_round_on_identical_agents_is_noop(self):
        agents = self.make_agents(1) * 3  # same object: identical weights
        agents = [agents[0]] + [DqnAgent(MlpSpec((3, 6, 4)),
                                         TrainConfig(batch_size=2, replay_capacity=8), seed=0)
                                for _ in range(2)]
        fused_from = flatten_weights(agents[0].eval_weights).copy()
        run_averaging_round(agents, "uniform", event_index=1)
        assert np.array_equal(flatten_weights(agents[0].eval_weights), fused_from)

    def test_memory_rule_uses_replay_sizes(self):
        agents = self.make_agents(2)
        from fedra.agent import Transition

        w0 = flatten_weights(agents[0].eval_weights).copy()
        agents[0].store(Transition(np.zeros(3, dtype=np.float32), 0, 0.0,
                                   np.zeros(3, dtype=np.float32)))
        # sizes (1, 0): fused model is exactly agent 0's
        run_averaging_round(agents, "memory", event_index=1)
        assert np.array_equal(flatten_weights(agents[1].eval_weights), w0)

    def test_empty_memories_fall_back_to_uniform(self):
        agents = self.make_agents(2)
        expected = average_by_success(
            [flatten_weights(a.eval_weights) for a in agents], [0.0, 0.0]
        )
        event = run_averaging_round(agents, "memory", event_index=3)
        assert np.array_equal(flatten_weights(agents[0].eval_weights), expected)
        assert event.coefficients == (0.5, 0.5)

    def test_checksums_and_record_shape(self):
        agents = self.make_agents(3)
        event = run_averaging_round(agents, "uniform", event_index=5)
        record = event.to_record()
        assert record["event_index"] == 5
        assert len(record["checksums_before"]) == 3
        assert all(len(c) == 16 for c in record["checksums_before"])
        assert record["checksum_after"] != record["checksums_before"][0]

    def test_mismatched_model_sizes_rejected(self):
        agents = self.make_agents(2)
        agents[1] = DqnAgent(MlpSpec((3, 7, 4)), TrainConfig(batch_size=2, replay_capacity=8),
                             seed=1)
        with pytest.raises(ValueError):
            run_averaging_round(agents, "uniform")

    def test_unknown_rule_rejected(self):
        with pytest.raises(ValueError):
            run_averaging_round(self.make_agents(2), "median")
