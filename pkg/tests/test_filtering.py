import math

import numpy as np
import pytest

from hmm.errors import ObservationRangeError, StationaryDistributionError
from hmm.filtering import (
    PROBABILITY_FLOOR,
    cross_entropy,
    dataset_loss,
    filter_init,
    filter_run,
    filter_step,
    log_likelihood,
    sequence_loss,
    zero_probability_events,
)
from hmm.params import HmmParams, SequenceDataset, param_count, stationary_distribution
from tests.oracles import brute_force_log_likelihood, brute_force_predictions, random_hmm


class TestFilterMatchesEnumeration:

    def test_fifty_random_models(self):
        rng = np.random.default_rng(2024)
        for seed in range(50):
            d = int(rng.integers(1, 5))
            m = int(rng.integers(2, 6))
            T = int(rng.integers(1, 9))
            params = random_hmm(d, m, seed)
            seq = rng.integers(0, m, size=T)
            np.testing.assert_allclose(
                filter_run(params, seq), brute_force_predictions(params, seq), rtol=0, atol=1e-10
            )

    def test_rows_are_distributions(self):
        params = random_hmm(3, 4, seed=1)
        predictions = filter_run(params, [0, 3, 2, 2, 1, 0])
        assert predictions.shape == (6, 4)
        assert np.all(predictions >= 0)
        np.testing.assert_allclose(predictions.sum(axis=1), 1.0, atol=1e-12)

    def test_predictions_are_causal(self):
        params = random_hmm(3, 4, seed=5)
        a = filter_run(params, [1, 2, 3, 0, 0])
        b = filter_run(params, [1, 2, 3, 3, 1])
        np.testing.assert_array_equal(a[:3], b[:3])


class TestFilterSteps:

    def test_init_sets_prior_to_pi(self, two_state_hmm):
        state = filter_init(two_state_hmm)
        np.testing.assert_array_equal(state.prior, two_state_hmm.pi)

    def test_first_step_by_hand(self, two_state_hmm):
        state = filter_step(filter_init(two_state_hmm), two_state_hmm, 2)
        unnormalized = two_state_hmm.pi * two_state_hmm.C[:, 2]
        posterior = unnormalized / unnormalized.sum()
        np.testing.assert_allclose(state.posterior, posterior)
        np.testing.assert_allclose(state.prior, posterior @ two_state_hmm.A)
        np.testing.assert_allclose(state.prediction, posterior @ two_state_hmm.A @ two_state_hmm.C)

    def test_step_and_run_agree(self, two_state_hmm):
        seq = [0, 1, 2, 2, 0]
        state = filter_init(two_state_hmm)
        rows = []
        for obs in seq:
            state = filter_step(state, two_state_hmm, obs)
            rows.append(state.prediction)
        np.testing.assert_array_equal(np.array(rows), filter_run(two_state_hmm, seq))

    def test_single_state_predicts_emission_row(self):
        params = HmmParams(pi=[1.0], A=[[1.0]], C=[[0.25, 0.75]])
        np.testing.assert_allclose(filter_run(params, [0, 1, 1]), [[0.25, 0.75]] * 3)

    def test_impossible_observation_uses_epsilon_floor(self):
        params = HmmParams(
            pi=[1.0, 0.0],
            A=[[1.0, 0.0], [0.0, 1.0]],
            C=[[1.0, 0.0], [0.0, 1.0]],
        )
        predictions = filter_run(params, [1, 0])
        assert np.all(np.isfinite(predictions))
        np.testing.assert_allclose(predictions.sum(axis=1), 1.0)

    def test_out_of_range_observation(self, two_state_hmm):
        with pytest.raises(ObservationRangeError, match="observation out of range"):
            filter_run(two_state_hmm, [0, 3])
        with pytest.raises(ValueError):
            filter_run(two_state_hmm, [-1])

    def test_empty_sequence_rejected(self, two_state_hmm):
        with pytest.raises(ValueError):
            filter_run(two_state_hmm, [])


class TestCrossEntropy:

    def test_uniform_is_log_m(self):
        for m in (2, 16, 32, 82, 128):
            predictions = np.full((10, m), 1.0 / m)
            targets = np.arange(10) % m
            assert cross_entropy(predictions, targets) == pytest.approx(math.log(m), abs=1e-12)

    def test_certain_predictions_cost_nothing(self):
        predictions = np.eye(3)
        assert cross_entropy(predictions, [0, 1, 2]) == 0.0

    def test_zero_probability_is_clamped_and_counted(self):
        predictions = np.array([[1.0, 0.0], [0.5, 0.5]])
        loss = cross_entropy(predictions, [1, 0])
        assert loss == pytest.approx((-math.log(PROBABILITY_FLOOR) + math.log(2)) / 2)
        assert zero_probability_events() == 1

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cross_entropy(np.full((3, 2), 0.5), [0, 1])

    def test_sequence_loss_needs_two_tokens(self, two_state_hmm):
        with pytest.raises(ValueError, match="no prediction targets"):
            sequence_loss(two_state_hmm, [1])

    def test_dataset_loss_skips_length_one(self, two_state_hmm):
        long_only = SequenceDataset(m=3, sequences=([0, 1, 2, 1],))
        mixed = SequenceDataset(m=3, sequences=([0, 1, 2, 1], [2]))
        assert dataset_loss(two_state_hmm, mixed) == dataset_loss(two_state_hmm, long_only)

    def test_dataset_loss_is_mean_of_sequence_losses(self, two_state_hmm):
        ds = SequenceDataset(m=3, sequences=([0, 1, 2, 1], [2, 2, 0]))
        expected = np.mean([sequence_loss(two_state_hmm, s) for s in ds.sequences])
        assert dataset_loss(two_state_hmm, ds) == pytest.approx(expected)

    def test_dataset_loss_vocab_mismatch(self, two_state_hmm):
        with pytest.raises(ValueError):
            dataset_loss(two_state_hmm, SequenceDataset(m=4, sequences=([0, 3],)))


class TestLikelihood:

    def test_matches_enumeration(self):
        for seed in range(10):
            params = random_hmm(3, 4, seed)
            seq = np.random.default_rng(seed).integers(0, 4, size=6)
            assert log_likelihood(params, seq) == pytest.approx(
                brute_force_log_likelihood(params, seq), abs=1e-10
            )

    def test_chain_rule_against_filter(self):
        params = random_hmm(3, 5, seed=9)
        seq = np.array([4, 0, 1, 1, 3, 2, 0])
        predictions = filter_run(params, seq)
        first = math.log(params.pi @ params.C[:, seq[0]])
        chained = first + np.sum(np.log(predictions[np.arange(seq.size - 1), seq[1:]]))
        assert log_likelihood(params, seq) == pytest.approx(chained, abs=1e-10)

    def test_impossible_observation_is_floored_not_infinite(self):
        params = HmmParams(pi=[0.5, 0.5], A=[[0.9, 0.1], [0.2, 0.8]], C=[[1.0, 0.0], [1.0, 0.0]])
        assert log_likelihood(params, [0, 1, 0]) == pytest.approx(math.log(2e-12), abs=1e-9)
        assert np.all(np.isfinite(filter_run(params, [0, 1, 0])))


class TestParams:

    def test_param_counts(self):
        assert param_count(64, 128) == 12352
        assert param_count(64, 32) == 6208

    def test_rejects_non_stochastic_rows(self):
        with pytest.raises(ValueError, match="sum to 1"):
            HmmParams(pi=[0.5, 0.5], A=[[0.5, 0.6], [0.5, 0.5]], C=[[0.5, 0.5], [0.5, 0.5]])

    def test_rejects_single_symbol(self):
        with pytest.raises(ValueError):
            HmmParams(pi=[1.0], A=[[1.0]], C=[[1.0]])

    def test_arrays_are_read_only(self, two_state_hmm):
        with pytest.raises(ValueError):
            two_state_hmm.A[0, 0] = 0.5

    def test_permuted_relabels_states(self, two_state_hmm):
        swapped = two_state_hmm.permuted([1, 0])
        np.testing.assert_array_equal(swapped.pi, [0.4, 0.6])
        np.testing.assert_array_equal(swapped.A, [[0.8, 0.2], [0.1, 0.9]])
        np.testing.assert_array_equal(swapped.C[0], two_state_hmm.C[1])

    def test_stationary_distribution(self, two_state_hmm):
        stationary = stationary_distribution(two_state_hmm.A)
        np.testing.assert_allclose(stationary, [2 / 3, 1 / 3], atol=1e-12)
        np.testing.assert_allclose(stationary @ two_state_hmm.A, stationary, atol=1e-12)

    def test_periodic_chain_has_no_limit(self):
        with pytest.raises(StationaryDistributionError, match="no stationary distribution"):
            stationary_distribution(np.array([[0.0, 1.0, 0.0], [0.5, 0.0, 0.5], [0.0, 1.0, 0.0]]), max_iter=100)
