import numpy as np
import pytest

from hmm.params import HmmParams
from hmm.sampling import derive_rng, sample_categorical, sample_sequences


def test_same_seed_same_dataset(two_state_hmm):
    a = sample_sequences(two_state_hmm, 5, 12, seed=7)
    b = sample_sequences(two_state_hmm, 5, 12, seed=7)
    for x, y in zip(a.sequences, b.sequences):
        np.testing.assert_array_equal(x, y)


def test_different_streams_differ():
    a = derive_rng(1, 0).random(8)
    b = derive_rng(1, 1).random(8)
    assert not np.allclose(a, b)


def test_shapes_and_range(two_state_hmm):
    ds = sample_sequences(two_state_hmm, 4, 9, seed=0)
    assert ds.n_sequences == 4
    assert ds.lengths == (9, 9, 9, 9)
    assert ds.m == 3
    assert all(seq.min() >= 0 and seq.max() < 3 for seq in ds.sequences)


def test_deterministic_chain_is_reproduced_exactly():
    params = HmmParams(
        pi=[1.0, 0.0, 0.0],
        A=[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]],
        C=np.eye(3),
    )
    ds = sample_sequences(params, 2, 7, seed=11)
    for seq in ds.sequences:
        np.testing.assert_array_equal(seq, [0, 1, 2, 0, 1, 2, 0])


def test_empirical_emission_frequencies():
    params = HmmParams(pi=[1.0], A=[[1.0]], C=[[0.2, 0.3, 0.5]])
    ds = sample_sequences(params, 400, 100, seed=4)
    counts = np.bincount(np.concatenate(ds.sequences), minlength=3) / ds.n_tokens
    np.testing.assert_allclose(counts, [0.2, 0.3, 0.5], atol=0.015)


def test_sample_categorical_never_exceeds_range():
    rows = np.array([[0.0, 0.0, 1.0]] * 1000)
    picks = sample_categorical(np.random.default_rng(0), rows)
    assert np.all(picks == 2)


def test_rejects_bad_sizes(two_state_hmm):
    with pytest.raises(ValueError):
        sample_sequences(two_state_hmm, 0, 5, seed=0)
    with pytest.raises(ValueError):
        derive_rng(-1)


class _TopOfUnitInterval:
    """Stands in for a Generator whose draws sit just below 1."""

    def random(self, size):
        return np.full(size, np.nextafter(1.0, 0.0))


def test_rounding_never_selects_a_zero_probability_symbol():
    # ten 0.1 entries accumulate to just under 1
    rows = np.array([[0.1] * 10 + [0.0]])
    picks = sample_categorical(_TopOfUnitInterval(), rows)
    assert picks[0] == 9
    assert rows[0, picks[0]] > 0


def test_symmetric_chain_unigrams_match_stationary():
    params = HmmParams(pi=[0.5, 0.5], A=[[0.9, 0.1], [0.1, 0.9]], C=[[0.8, 0.2], [0.2, 0.8]])
    ds = sample_sequences(params, 10000, 100, seed=6)
    frequencies = np.bincount(np.concatenate(ds.sequences), minlength=2) / ds.n_tokens
    np.testing.assert_allclose(frequencies, [0.5, 0.5], atol=0.01)
