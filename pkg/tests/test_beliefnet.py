import math
from dataclasses import replace

import numpy as np
import pytest

from hmm.errors import ObservationRangeError
from hmm.filtering import PROBABILITY_FLOOR, cross_entropy, dataset_loss, filter_run, zero_probability_events
from hmm.params import HmmParams, SequenceDataset
from hmm.sampling import derive_rng, sample_sequences
from ingestion.synthetic import SyntheticConfig, make_instance
from learners.beliefnet import (
    GridSpec,
    TrainConfig,
    backward,
    batch_loss_and_grad,
    forward,
    grid_search,
    train,
)
from learners.logits import LogitParams, init_logits, to_probs


def _finite_difference(lp, seq, h=1e-5, dropout=0.0, seed=0):
    def loss_at(arrays):
        rng = derive_rng(seed, 2) if dropout > 0 else None
        return forward(LogitParams(*arrays), seq, dropout=dropout, rng=rng)[1]

    grads = []
    for block in range(3):
        base = [a.copy() for a in lp.arrays()]
        grad = np.zeros_like(base[block])
        for idx in np.ndindex(base[block].shape):
            plus = [a.copy() for a in base]
            minus = [a.copy() for a in base]
            plus[block][idx] += h
            minus[block][idx] -= h
            grad[idx] = (loss_at(plus) - loss_at(minus)) / (2 * h)
        grads.append(grad)
    return grads


class TestForward:

    def test_matches_filter_pipeline(self):
        lp = init_logits(3, 4, np.random.default_rng(0), scale=1.0)
        seq = np.array([0, 3, 1, 1, 2, 0, 3])
        predictions, loss, _ = forward(lp, seq)
        reference = filter_run(to_probs(lp), seq)
        np.testing.assert_allclose(predictions, reference, rtol=0, atol=1e-12)
        assert loss == pytest.approx(cross_entropy(reference[:-1], seq[1:]), abs=1e-12)

    def test_zero_logits_give_log_m(self):
        _, loss, _ = forward(LogitParams.zeros(3, 5), [4, 0, 2, 2])
        assert loss == pytest.approx(math.log(5), abs=1e-12)

    def test_deterministic_cycle_is_perfect(self):
        cycle = HmmParams(
            pi=[1.0, 0.0, 0.0],
            A=[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]],
            C=np.eye(3),
        )
        _, loss, _ = forward(LogitParams.from_probs(cycle), [0, 1, 2, 0, 1, 2])
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_zero_probability_target_is_clamped_and_counted(self):
        never_one = LogitParams(np.zeros(2), np.zeros((2, 2)), np.array([[0.0, -1000.0], [0.0, -1000.0]]))
        assert zero_probability_events() == 0
        predictions, loss, _ = forward(never_one, [0, 1])
        assert predictions[0, 1] == 0.0
        assert loss == pytest.approx(-math.log(PROBABILITY_FLOOR))
        assert zero_probability_events() == 1

    def test_needs_a_target(self):
        with pytest.raises(ValueError, match="no prediction targets"):
            forward(LogitParams.zeros(2, 3), [1])

    def test_out_of_range(self):
        with pytest.raises(ObservationRangeError):
            forward(LogitParams.zeros(2, 3), [1, 3])


class TestBackward:

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        for instance in range(20):
            d = int(rng.integers(1, 5))
            m = int(rng.integers(2, 6))
            T = int(rng.integers(2, 7))
            lp = init_logits(d, m, np.random.default_rng(instance), scale=1.0)
            seq = rng.integers(0, m, size=T)
            _, _, tape = forward(lp, seq)
            analytic = backward(tape).arrays()
            for a, n in zip(analytic, _finite_difference(lp, seq)):
                np.testing.assert_allclose(a, n, rtol=1e-4, atol=1e-8)

    def test_matches_finite_differences_with_dropout(self):
        lp = init_logits(3, 4, np.random.default_rng(3), scale=1.0)
        seq = np.array([1, 0, 3, 3, 2])
        _, _, tape = forward(lp, seq, dropout=0.3, rng=derive_rng(5, 2))
        analytic = backward(tape).arrays()
        numeric = _finite_difference(lp, seq, dropout=0.3, seed=5)
        for a, n in zip(analytic, numeric):
            np.testing.assert_allclose(a, n, rtol=1e-4, atol=1e-8)

    def test_rows_of_the_gradient_sum_to_zero(self):
        lp = init_logits(4, 5, np.random.default_rng(11), scale=1.0)
        _, _, tape = forward(lp, [0, 4, 4, 1, 2, 3])
        grad = backward(tape)
        assert abs(grad.pi_logits.sum()) < 1e-10
        np.testing.assert_allclose(grad.a_logits.sum(axis=1), 0.0, atol=1e-10)
        np.testing.assert_allclose(grad.c_logits.sum(axis=1), 0.0, atol=1e-10)

    def test_batch_gradient_is_the_mean(self):
        lp = init_logits(2, 3, np.random.default_rng(1), scale=1.0)
        batch = [np.array([0, 1, 2]), np.array([2, 2, 1, 0]), np.array([1, 0])]
        loss, grad = batch_loss_and_grad(lp, batch)
        per_seq = [forward(lp, seq) for seq in batch]
        assert loss == pytest.approx(np.mean([p[1] for p in per_seq]), abs=1e-12)
        grads = [backward(p[2]).arrays() for p in per_seq]
        for block, array in enumerate(grad.arrays()):
            np.testing.assert_allclose(array, np.mean([g[block] for g in grads], axis=0), atol=1e-12)


class TestTrain:

    def test_zero_iterations_returns_initialization(self, small_dataset):
        cfg = TrainConfig(max_iters=0, seed=3)
        params, result = train(small_dataset, 2, cfg, small_dataset)
        expected = to_probs(init_logits(2, 3, derive_rng(3, 0), scale=cfg.init_scale))
        np.testing.assert_array_equal(params.A, expected.A)
        assert result.training_curve == []
        assert result.validation_curve == []

    def test_curves_and_validation_schedule(self, small_dataset):
        cfg = TrainConfig(max_iters=120, val_every=50, lr=0.05)
        _, result = train(small_dataset, 2, cfg, small_dataset)
        assert [i for i, _ in result.training_curve] == list(range(1, 121))
        assert [i for i, _ in result.validation_curve] == [50, 100, 120]

    def test_same_seed_same_curves(self, small_dataset):
        cfg = TrainConfig(max_iters=30, val_every=10, dropout=0.1, seed=8)
        _, a = train(small_dataset, 2, cfg, small_dataset)
        _, b = train(small_dataset, 2, cfg, small_dataset)
        assert a.training_curve == b.training_curve
        assert a.validation_curve == b.validation_curve

    def test_training_reduces_validation_loss(self, two_state_hmm):
        train_ds = sample_sequences(two_state_hmm, 60, 30, seed=1)
        val = sample_sequences(two_state_hmm, 20, 30, seed=2)
        cfg = TrainConfig(max_iters=300, lr=0.05)
        params, result = train(train_ds, 2, cfg, val)
        start = to_probs(init_logits(2, 3, derive_rng(cfg.seed, 0), scale=cfg.init_scale))
        assert result.final_validation_loss == pytest.approx(dataset_loss(params, val))
        assert result.final_validation_loss < dataset_loss(start, val) - 0.03

    def test_patience_stops_early(self, small_dataset):
        cfg = TrainConfig(max_iters=200, val_every=1, lr=0.5, patience=1)
        _, result = train(small_dataset, 2, cfg, small_dataset)
        assert result.stopped_early
        assert result.iterations < 200

    def test_cosine_schedule_runs(self, small_dataset):
        cfg = TrainConfig(max_iters=20, val_every=10, schedule="cosine")
        _, result = train(small_dataset, 2, cfg, small_dataset)
        assert result.iterations == 20

    def test_rejects_length_one_sequences(self):
        ds = SequenceDataset(m=2, sequences=([0, 1], [1]))
        with pytest.raises(ValueError):
            train(ds, 2, TrainConfig(max_iters=1))

    @pytest.mark.parametrize("kwargs", [
        {"batch_size": 0},
        {"lr": 0.0},
        {"dropout": 1.0},
        {"schedule": "linear"},
        {"patience": 0},
    ])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestGridSearch:

    def test_single_point_equals_train(self, small_dataset):
        base = TrainConfig(max_iters=40, val_every=20)
        outcome = grid_search(small_dataset, 2, GridSpec(lrs=(0.05,), dropouts=(0.0,)), small_dataset, base)
        params, _ = train(small_dataset, 2, replace(base, lr=0.05, dropout=0.0), small_dataset)
        np.testing.assert_array_equal(outcome.params.A, params.A)

    def test_selects_argmin(self, small_dataset):
        base = TrainConfig(max_iters=40, val_every=20)
        outcome = grid_search(small_dataset, 2, GridSpec(), small_dataset, base)
        assert len(outcome.table) == 4
        best = min(outcome.table, key=lambda row: (row[2], row[0], row[1]))
        assert (outcome.config.lr, outcome.config.dropout) == (best[0], best[1])


@pytest.mark.slow
def test_desk_scale_learning_reaches_the_oracle():
    instance = make_instance(SyntheticConfig(d=8, m=16, n_train=200, t=64, lam=0.9, seed=0))
    cfg = TrainConfig(batch_size=10, max_iters=1000, lr=0.05, seed=0)
    params, _ = train(instance.train, 8, cfg, instance.val)
    learned = dataset_loss(params, instance.val)
    oracle = dataset_loss(instance.params, instance.val)
    assert learned <= oracle + 0.1
    assert learned <= math.log(16) - 0.5
