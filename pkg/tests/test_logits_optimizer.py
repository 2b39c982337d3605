import math

import numpy as np
import pytest

from hmm.errors import GradientOverflowError
from learners.logits import LogitParams, init_logits, read_logits, to_probs, write_logits
from learners.optimizer import adamw_step, cosine_lr, init_optimizer


def _constant(d, m, value):
    return LogitParams(np.full(d, value), np.full((d, d), value), np.full((d, m), value))


class TestToProbs:

    def test_zero_logits_are_uniform(self):
        params = to_probs(LogitParams.zeros(2, 3))
        np.testing.assert_allclose(params.pi, [0.5, 0.5])
        np.testing.assert_allclose(params.A, np.full((2, 2), 0.5))
        np.testing.assert_allclose(params.C, np.full((2, 3), 1 / 3))

    def test_closed_form(self):
        lp = LogitParams([math.log(2.0), 0.0], np.zeros((2, 2)), np.zeros((2, 3)))
        np.testing.assert_allclose(to_probs(lp).pi, [2 / 3, 1 / 3])

    def test_row_shift_invariance(self):
        lp = init_logits(3, 4, np.random.default_rng(0), scale=1.0)
        a = lp.a_logits.copy()
        a[1] += 7.3
        c = lp.c_logits.copy()
        c[2] += 7.3
        original, moved = to_probs(lp), to_probs(LogitParams(lp.pi_logits + 7.3, a, c))
        np.testing.assert_allclose(moved.pi, original.pi, atol=1e-12)
        np.testing.assert_allclose(moved.A, original.A, atol=1e-12)
        np.testing.assert_allclose(moved.C, original.C, atol=1e-12)

    def test_from_probs_inverts(self, two_state_hmm):
        back = to_probs(LogitParams.from_probs(two_state_hmm))
        np.testing.assert_allclose(back.A, two_state_hmm.A, atol=1e-12)
        np.testing.assert_allclose(back.C, two_state_hmm.C, atol=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            LogitParams([np.nan, 0.0], np.zeros((2, 2)), np.zeros((2, 3)))

    def test_init_scale(self):
        lp = init_logits(50, 60, np.random.default_rng(1), scale=0.1)
        assert lp.c_logits.shape == (50, 60)
        assert np.std(lp.c_logits) == pytest.approx(0.1, rel=0.05)

    def test_logit_file(self, tmp_path):
        lp = init_logits(2, 3, np.random.default_rng(2))
        loaded = read_logits(write_logits(tmp_path / "logits.json", lp))
        for x, y in zip(loaded.arrays(), lp.arrays()):
            np.testing.assert_array_equal(x, y)


class TestAdamW:

    def test_zero_gradient_without_decay_is_a_fixed_point(self):
        lp = _constant(2, 3, 0.7)
        opt = init_optimizer(lp, lr=0.1, weight_decay=0.0)
        updated, _ = adamw_step(lp, LogitParams.zeros(2, 3), opt)
        for x, y in zip(updated.arrays(), lp.arrays()):
            np.testing.assert_array_equal(x, y)

    def test_first_step_moves_by_lr(self):
        lp = LogitParams.zeros(1, 2)
        opt = init_optimizer(lp, lr=0.1, weight_decay=0.0)
        updated, state = adamw_step(lp, _constant(1, 2, 1.0), opt)
        for array in updated.arrays():
            np.testing.assert_allclose(array, -0.1 / (1.0 + 1e-8))
        assert state.step_count == 1

    def test_decay_shrinks_multiplicatively(self):
        lp = _constant(2, 2, 2.0)
        opt = init_optimizer(lp, lr=0.1, weight_decay=0.01)
        updated, _ = adamw_step(lp, LogitParams.zeros(2, 2), opt)
        for array in updated.arrays():
            np.testing.assert_allclose(array, 2.0 * (1 - 0.1 * 0.01))

    def test_second_step_bias_correction(self):
        lp = LogitParams.zeros(1, 2)
        opt = init_optimizer(lp, lr=0.01, weight_decay=0.0)
        lp1, opt = adamw_step(lp, _constant(1, 2, 1.0), opt)
        lp2, opt = adamw_step(lp1, _constant(1, 2, -2.0), opt)
        m = 0.9 * 0.1 + 0.1 * -2.0
        v = 0.999 * 0.001 + 0.001 * 4.0
        step = (m / (1 - 0.9 ** 2)) / (math.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
        np.testing.assert_allclose(lp2.pi_logits, lp1.pi_logits - 0.01 * step)

    def test_non_finite_gradient(self):
        lp = LogitParams.zeros(1, 2)
        opt = init_optimizer(lp, lr=0.1)
        bad = LogitParams.zeros(1, 2)
        object.__setattr__(bad, "c_logits", np.array([[np.inf, 0.0]]))
        with pytest.raises(GradientOverflowError, match="gradient overflow"):
            adamw_step(lp, bad, opt)

    def test_cosine_schedule(self):
        assert cosine_lr(0.1, 0, 100) == pytest.approx(0.1)
        assert cosine_lr(0.1, 50, 100) == pytest.approx(0.05)
        assert cosine_lr(0.1, 100, 100) == pytest.approx(0.0, abs=1e-15)
