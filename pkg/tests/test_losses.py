import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vadsphere import losses as L
from vadsphere.errors import ConfigurationError, DomainError
from vadsphere.gradcheck import numeric_grad, rel_error


def ccc_oracle(x, y):
    """Plain-Python concordance correlation with the same epsilon."""
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    vx = sum((a - mx) ** 2 for a in x) / n
    vy = sum((b - my) ** 2 for b in y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    return 2 * cov / (vx + vy + (mx - my) ** 2 + 1e-8)


def ce_oracle(logits, target):
    z = [math.exp(v) for v in logits]
    return -math.log(z[target] / sum(z))


class TestWeights:
    def test_uniform_counts(self):
        assert np.array_equal(L.inverse_frequency_weights([10, 10, 10, 10], 4).w, np.ones(4))

    def test_ratio(self):
        assert L.inverse_frequency_weights([30, 10], 2).w == pytest.approx([0.5, 1.5], abs=1e-15)

    def test_empty_class_is_clamped(self):
        # 1/5 : 1/1 = 1 : 5, mean-normalized -> 1/3, 5/3
        w = L.inverse_frequency_weights([5, 0], 2).w
        assert w == pytest.approx([1 / 3, 5 / 3], abs=1e-15)

    def test_all_zero_is_an_error(self):
        with pytest.raises(ConfigurationError):
            L.inverse_frequency_weights([0, 0, 0], 3)

    @given(st.lists(st.integers(0, 1000), min_size=1, max_size=40))
    def test_mean_is_one(self, counts):
        if not any(counts):
            return
        w = L.inverse_frequency_weights(counts).w
        assert np.all(w > 0)
        assert abs(w.mean() - 1.0) < 1e-9


class TestWeightedCrossEntropy:
    def test_uniform_softmax(self):
        out = L.weighted_cross_entropy([[0.0, 0.0]], [0], [1.0, 1.0])
        assert out.value == pytest.approx(math.log(2), abs=1e-15)

    def test_weighted(self):
        out = L.weighted_cross_entropy([[0.0, 0.0]], [0], [1.5, 0.5])
        assert out.value == pytest.approx(1.5 * math.log(2), abs=1e-15)
        assert out.value == pytest.approx(1.039721, abs=1e-6)

    def test_unit_weights_reduce_to_cross_entropy(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(16, 5)) * 3
        t = rng.integers(0, 5, 16)
        expected = sum(ce_oracle(row, k) for row, k in zip(logits.tolist(), t)) / 16
        assert abs(L.weighted_cross_entropy(logits, t, np.ones(5)).value - expected) < 1e-12

    def test_shift_invariance(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(size=(8, 4))
        t = rng.integers(0, 4, 8)
        w = L.inverse_frequency_weights(np.bincount(t, minlength=4))
        a = L.weighted_cross_entropy(logits, t, w).value
        b = L.weighted_cross_entropy(logits + rng.normal(size=(8, 1)) * 50, t, w).value
        assert abs(a - b) < 1e-9

    def test_extreme_logits_stay_finite(self):
        out = L.weighted_cross_entropy([[1000.0, -1000.0]], [1], [1.0, 1.0])
        assert out.value == pytest.approx(2000.0)
        assert np.all(np.isfinite(out.grad))

    def test_target_out_of_range(self):
        with pytest.raises(IndexError):
            L.weighted_cross_entropy([[0.0, 0.0]], [2], [1.0, 1.0])

    def test_gradient_formula(self):
        logits = np.array([[0.3, -0.2, 1.0]])
        out = L.weighted_cross_entropy(logits, [2], [1.0, 2.0, 0.5])
        p = np.exp(logits) / np.exp(logits).sum()
        assert np.allclose(out.grad, 0.5 * (p - [0, 0, 1]), atol=1e-15)


class TestCCC:
    def test_perfect(self):
        assert L.ccc([1, 2, 3], [1, 2, 3]) >= 1 - 1e-7

    def test_reversed(self):
        assert L.ccc([3, 2, 1], [1, 2, 3]) == pytest.approx(-1, abs=1e-7)

    def test_constant_pair(self):
        assert L.ccc([0, 0, 0, 0], [1, 1, 1, 1]) == 0.0

    def test_matches_oracle(self):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=20), rng.normal(size=20) + 0.3
        assert L.ccc(x, y) == pytest.approx(ccc_oracle(x.tolist(), y.tolist()), abs=1e-14)

    def test_errors(self):
        with pytest.raises(DomainError):
            L.ccc([1.0], [1.0])
        with pytest.raises(DomainError):
            L.ccc([1.0, 2.0], [1.0, 2.0, 3.0])

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=30), st.randoms())
    def test_symmetric_and_bounded(self, xs, rnd):
        ys = [rnd.uniform(-100, 100) for _ in xs]
        a, b = L.ccc(xs, ys), L.ccc(ys, xs)
        assert a == pytest.approx(b, abs=1e-12)
        assert -1 - 1e-9 <= a <= 1 + 1e-9

    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=30))
    def test_self_agreement(self, xs):
        # CCC(y, y) = 2 var / (2 var + eps); >= 1 - 1e-6 needs var >= 5e-3
        var = float(np.var(xs))
        assert L.ccc(xs, xs) == pytest.approx(2 * var / (2 * var + L.CCC_EPS), abs=1e-12)
        if var >= 5e-3:
            assert L.ccc(xs, xs) >= 1 - 1e-6


class TestCCCLoss:
    def test_identical(self):
        t = np.random.default_rng(3).normal(size=(10, 3))
        assert L.ccc_loss(t, t).value == pytest.approx(0, abs=1e-7)

    def test_reversed_is_two(self):
        t = np.random.default_rng(4).normal(size=(10, 3))
        rev = 2 * t.mean(axis=0) - t
        assert L.ccc_loss(rev, t).value == pytest.approx(2, abs=1e-7)

    def test_batch_of_one(self):
        with pytest.raises(DomainError):
            L.ccc_loss(np.zeros((1, 3)), np.zeros((1, 3)))

    @pytest.mark.parametrize("seed", range(100))
    def test_gradient_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        pred, target = rng.normal(size=(8, 3)), rng.normal(size=(8, 3))
        out = L.ccc_loss(pred, target)
        num = numeric_grad(lambda: L.ccc_loss(pred, target).value, pred)
        assert rel_error(out.grad, num, out.value) < 1e-4

    @pytest.mark.parametrize("seed", range(100))
    def test_wce_gradient_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        logits = rng.normal(size=(6, 5)) * 2
        t = rng.integers(0, 5, 6)
        w = L.inverse_frequency_weights(np.bincount(t, minlength=5))
        out = L.weighted_cross_entropy(logits, t, w)
        num = numeric_grad(lambda: L.weighted_cross_entropy(logits, t, w).value, logits)
        assert rel_error(out.grad, num, out.value) < 1e-4


class TestSchedule:
    def test_table(self):
        cfg = L.ScheduleConfig()
        assert L.lambda_schedule(0, cfg) == 1.0
        assert L.lambda_schedule(2, cfg) == pytest.approx(0.604, abs=1e-12)
        assert L.lambda_schedule(4, cfg) == pytest.approx(0.208, abs=1e-12)
        assert L.lambda_schedule(5, cfg) == 0.0
        assert L.lambda_schedule(19, cfg) == 0.0

    def test_disabled_is_constant_one(self):
        cfg = L.ScheduleConfig(enabled=False)
        assert all(L.lambda_schedule(e, cfg) == 1.0 for e in range(30))

    def test_negative_epoch(self):
        with pytest.raises(DomainError):
            L.lambda_schedule(-1)

    def test_non_increasing(self):
        vals = [L.lambda_schedule(e) for e in range(20)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))


class TestCombined:
    def _parts(self, c, s):
        return L.LossValue(c, np.ones((4, 3))), L.LossValue(s, np.full((4, 8), 2.0))

    def test_after_cutoff_is_ccc_only(self):
        c, s = self._parts(0.5, 0.7)
        out = L.combined_loss(c, s, 10)
        assert out.value == 0.5 and out.weight == 0.0
        assert not out.grad_logits.any()

    def test_epoch_zero(self):
        out = L.combined_loss(*self._parts(0.5, 0.7), 0)
        assert out.value == pytest.approx(1.2, abs=1e-15)
        assert np.all(out.grad_logits == 2.0)

    def test_epoch_two(self):
        out = L.combined_loss(*self._parts(0.5, 1.0), 2)
        assert out.value == pytest.approx(1.104, abs=1e-12)
        assert np.allclose(out.grad_logits, 2.0 * 0.604)

    def test_auxiliary_disabled(self):
        c, _ = self._parts(0.5, 0.7)
        out = L.combined_loss(c, None, 0)
        assert out.value == 0.5 and out.grad_logits is None
