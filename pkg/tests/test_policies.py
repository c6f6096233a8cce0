import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tr_ope.exceptions import RejectedInputError
from tr_ope.models.datasets import LabeledDataset, LoggedDataset
from tr_ope.services.core_math import NetShape, SgdConfig, init_net
from tr_ope.services.policies import (
    SoftmaxClassifierPolicy,
    TablePolicy,
    apply_floor,
    biased_subsample,
    deterministic_policy,
    estimate_logging_policy,
    logged_propensities,
    sample_action,
    sample_actions,
    train_biased_logging_policy,
    train_classifier_policy,
    uniform_policy,
)


class TestPolicies:
    def test_uniform(self):
        probabilities = uniform_policy(4).predict_proba(np.zeros((3, 2)))
        np.testing.assert_allclose(probabilities, 0.25)

    def test_uniform_needs_two_actions(self):
        with pytest.raises(RejectedInputError):
            uniform_policy(1)

    def test_single_context_gives_a_vector(self):
        assert uniform_policy(3)(np.zeros(2)).shape == (3,)

    @given(st.integers(min_value=0, max_value=10_000), st.floats(min_value=0.05, max_value=20.0))
    @settings(max_examples=30, deadline=None)
    def test_softmax_rows_are_probabilities(self, seed, temperature):
        policy = SoftmaxClassifierPolicy(init_net([3, 5, 4], seed=seed), temperature=temperature)
        contexts = np.random.default_rng(seed).normal(size=(6, 3))
        probabilities = policy.predict_proba(contexts)
        assert np.all(probabilities >= 0.0)
        np.testing.assert_allclose(probabilities.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_array_equal(probabilities, policy.predict_proba(contexts))

    def test_high_temperature_is_nearly_uniform(self):
        policy = SoftmaxClassifierPolicy(init_net([3, 5, 4], seed=0), temperature=1e6)
        probabilities = policy.predict_proba(np.random.default_rng(0).normal(size=(10, 3)))
        assert np.max(np.abs(probabilities - 0.25)) < 1e-3

    def test_floor_clamps_and_renormalizes(self):
        floored = apply_floor(np.array([[1.0, 0.0, 0.0]]), 0.1)
        np.testing.assert_allclose(floored, [[1.0 / 1.2, 0.1 / 1.2, 0.1 / 1.2]])

    def test_floor_above_uniform_rejected(self):
        with pytest.raises(RejectedInputError):
            SoftmaxClassifierPolicy(init_net([2, 2], seed=0), floor=0.6)

    def test_table_lookup(self):
        policy = TablePolicy([[0.0], [1.0]], [[0.2, 0.8], [0.5, 0.5]])
        np.testing.assert_allclose(policy.predict_proba([[1.0], [0.0]]), [[0.5, 0.5], [0.2, 0.8]])
        with pytest.raises(RejectedInputError):
            policy.predict_proba([[2.0]])

    def test_table_rows_must_sum_to_one(self):
        with pytest.raises(RejectedInputError):
            TablePolicy([[0.0]], [[0.2, 0.2]])

    def test_deterministic_policy(self):
        policy = deterministic_policy([[0.0], [1.0]], [1, 0], 3)
        np.testing.assert_array_equal(policy.predict_proba([[0.0], [1.0]]), [[0, 1, 0], [1, 0, 0]])


class TestSampling:
    def test_uniform_frequencies(self):
        actions = sample_actions(uniform_policy(4), np.zeros((10_000, 1)), 0)
        frequencies = np.bincount(actions, minlength=4) / 10_000
        np.testing.assert_allclose(frequencies, 0.25, atol=0.02)

    def test_deterministic_policy_always_picks_its_action(self):
        policy = deterministic_policy([[0.0], [1.0]], [2, 1], 3)
        actions = sample_actions(policy, np.array([[0.0], [1.0]] * 50), 3)
        np.testing.assert_array_equal(actions, [2, 1] * 50)

    def test_sample_action_is_reproducible(self):
        policy = uniform_policy(5)
        assert sample_action(policy, np.zeros(2), 11) == sample_action(policy, np.zeros(2), 11)

    def test_sample_action_needs_one_context(self):
        with pytest.raises(RejectedInputError):
            sample_action(uniform_policy(2), np.zeros((2, 2)), 0)


class TestTraining:
    def test_classifier_learns_separable_classes(self, labeled_blobs):
        policy = train_classifier_policy(labeled_blobs, NetShape(2, 16),
                                         SgdConfig(learning_rate=0.05, epochs=20, batch_size=16))
        predicted = policy.predict_proba(labeled_blobs.contexts).argmax(axis=1)
        assert np.mean(predicted == labeled_blobs.labels) >= 0.95

    def test_classifier_separates_two_linear_classes(self):
        rng = np.random.default_rng(13)
        labels = np.repeat([0, 1], 100)
        contexts = np.where(labels[:, None] == 0, -3.0, 3.0) + rng.normal(0.0, 0.5, size=(200, 2))
        data = LabeledDataset(contexts=contexts, labels=labels, n_actions=2)
        policy = train_classifier_policy(data, NetShape(2, 16),
                                         SgdConfig(learning_rate=0.05, epochs=20, batch_size=16))
        predicted = policy.predict_proba(contexts).argmax(axis=1)
        assert np.mean(predicted == labels) >= 0.95

    def test_single_class_data_gets_almost_all_mass(self):
        rng = np.random.default_rng(17)
        data = LabeledDataset(contexts=rng.normal(size=(100, 2)), labels=np.zeros(100, dtype=int), n_actions=2)
        policy = train_classifier_policy(data, NetShape(2, 8),
                                         SgdConfig(learning_rate=0.1, epochs=30, batch_size=10))
        assert policy.predict_proba(data.contexts)[:, 0].min() >= 0.9

    def test_coin_flip_logging_policy_is_estimated_near_half(self):
        rng = np.random.default_rng(5)
        n_rows = 2000
        logged = LoggedDataset(
            contexts=rng.normal(size=(n_rows, 2)),
            actions=rng.integers(2, size=n_rows),
            rewards=np.zeros(n_rows),
            n_actions=2,
        )
        policy = estimate_logging_policy(logged, NetShape(2, 8),
                                         SgdConfig(learning_rate=0.05, epochs=5, batch_size=32))
        held_out = rng.normal(size=(200, 2))
        np.testing.assert_allclose(policy.predict_proba(held_out), 0.5, atol=0.05)

    def test_uniform_logging_is_estimated_near_one_over_k(self):
        rng = np.random.default_rng(23)
        n_rows = 6000
        logged = LoggedDataset(
            contexts=rng.normal(size=(n_rows, 2)),
            actions=rng.integers(3, size=n_rows),
            rewards=np.zeros(n_rows),
            n_actions=3,
        )
        policy = estimate_logging_policy(logged, NetShape(2, 8),
                                         SgdConfig(learning_rate=0.05, epochs=5, batch_size=64))
        held_out = rng.normal(size=(200, 2))
        np.testing.assert_allclose(policy.predict_proba(held_out), 1.0 / 3.0, atol=0.05)

    def test_deterministic_logging_rule_is_recovered(self):
        rng = np.random.default_rng(29)
        n_rows = 2000
        actions = rng.integers(2, size=n_rows)
        contexts = np.where(actions[:, None] == 0, -4.0, 4.0) + rng.normal(0.0, 0.5, size=(n_rows, 2))
        logged = LoggedDataset(contexts=contexts, actions=actions, rewards=np.zeros(n_rows), n_actions=2)
        policy = estimate_logging_policy(logged, NetShape(2, 8),
                                         SgdConfig(learning_rate=0.1, epochs=10, batch_size=32))
        probabilities = policy.predict_proba(contexts)
        assert np.mean(probabilities.argmax(axis=1) == actions) >= 0.95
        assert np.mean(probabilities[np.arange(n_rows), actions]) >= 0.9

    def test_estimated_policy_is_floored(self, uniform_log):
        policy = estimate_logging_policy(uniform_log, NetShape(2, 4), SgdConfig(epochs=1), floor=0.2)
        assert np.all(policy.predict_proba(uniform_log.contexts) >= 0.2 - 1e-12)

    def test_empty_log_rejected(self):
        empty = LoggedDataset(contexts=np.zeros((0, 2)), actions=[], rewards=[], n_actions=2)
        with pytest.raises(RejectedInputError):
            estimate_logging_policy(empty)

    def test_biased_subsample_thins_half_the_classes(self, labeled_blobs):
        subsample = biased_subsample(labeled_blobs, fraction=0.1, seed=0)
        counts = np.bincount(subsample.labels, minlength=3)
        assert sorted(counts.tolist())[-2:] == [100, 100]
        assert counts.min() < 30

    def test_biased_subsample_fraction_one_keeps_everything(self, labeled_blobs):
        assert biased_subsample(labeled_blobs, fraction=1.0, seed=0).n_rows == labeled_blobs.n_rows

    def test_biased_logging_policy_is_floored(self, labeled_blobs):
        policy = train_biased_logging_policy(labeled_blobs, fraction=0.05, net_shape=NetShape(2, 16),
                                             config=SgdConfig(learning_rate=0.05, epochs=5, batch_size=16),
                                             seed=0)
        probabilities = policy.predict_proba(labeled_blobs.contexts)
        np.testing.assert_allclose(probabilities.sum(axis=1), 1.0, atol=1e-9)
        assert probabilities.min() >= 1e-4 - 1e-12


class TestPropensities:
    def test_logged_values_take_precedence(self, uniform_log):
        # contexts absent from this table, so evaluating it would raise
        skewed = TablePolicy([[99.0, 99.0]], [[1.0, 0.0]])
        np.testing.assert_array_equal(logged_propensities(uniform_log, skewed), uniform_log.propensities)

    def test_policy_used_when_nothing_was_logged(self):
        logged = LoggedDataset(contexts=[[0.0], [1.0]], actions=[1, 0], rewards=[1.0, 0.0], n_actions=2)
        policy = TablePolicy([[0.0], [1.0]], [[0.3, 0.7], [0.6, 0.4]])
        np.testing.assert_allclose(logged_propensities(logged, policy), [0.7, 0.6])

    def test_missing_propensities_and_policy(self):
        logged = LoggedDataset(contexts=[[0.0]], actions=[0], rewards=[1.0], n_actions=2)
        with pytest.raises(RejectedInputError):
            logged_propensities(logged)
