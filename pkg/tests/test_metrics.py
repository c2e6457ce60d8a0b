import math

import numpy as np
import pytest
from sklearn.metrics import roc_auc_score

from oracles import brute_force_auc
from reefscale.errors import DegenerateLabels, EmptyInput, KeyMismatch
from reefscale.metrics import (
    PairedScores,
    bce_soft_grad,
    bce_soft_loss,
    binary_kl,
    format_report,
    mae,
    metric_report,
    pair_scores,
    rmse,
    roc_auc,
)

P = PairedScores.from_arrays


class TestErrors:
    def test_identical(self):
        x = np.random.default_rng(0).random(50)
        assert rmse(P(x, x)) == 0.0
        assert mae(P(x, x)) == 0.0

    def test_hand_case(self):
        pairs = P([0, 1], [0.5, 0.5])
        assert rmse(pairs) == pytest.approx(0.5)
        assert mae(pairs) == pytest.approx(0.5)

    def test_constant_offset(self):
        x = np.linspace(0, 0.8, 9)
        assert mae(P(x, x + 0.1)) == pytest.approx(0.1)

    def test_mae_le_rmse(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a, b = rng.random((2, 20))
            assert mae(P(a, b)) <= rmse(P(a, b)) + 1e-15

    def test_empty(self):
        with pytest.raises(EmptyInput):
            rmse(P([], []))


class TestKL:
    def test_equal(self):
        x = np.random.default_rng(2).random(30)
        assert binary_kl(P(x, x)) == pytest.approx(0.0, abs=1e-12)

    def test_closed_form(self):
        # exact value is ln 2; the clamp moves it by about eps * ln(1/eps)
        assert binary_kl(P([1.0], [0.5])) == pytest.approx(math.log(2), abs=1e-5)

    def test_half_half(self):
        assert binary_kl(P([0.5], [0.5])) == 0.0

    def test_finite_at_extremes(self):
        assert math.isfinite(binary_kl(P([1.0, 0.0], [0.0, 1.0])))

    def test_nonnegative(self):
        rng = np.random.default_rng(3)
        a, b = rng.random((2, 100))
        assert binary_kl(P(a, b)) >= 0


class TestAUC:
    def test_separating(self):
        assert roc_auc(P([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9])) == 1.0

    def test_inverted(self):
        assert roc_auc(P([0, 0, 1, 1], [0.9, 0.8, 0.2, 0.1])) == 0.0

    def test_all_tied(self):
        assert roc_auc(P([0, 1, 0, 1, 1], [0.3] * 5)) == 0.5

    def test_matches_sklearn_and_pairwise(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            ref = rng.random(60)
            pred = np.round(rng.random(60), 1)  # forces ties
            labels = ref >= 0.5
            if labels.all() or not labels.any():
                continue
            ours = roc_auc(P(ref, pred))
            assert ours == pytest.approx(roc_auc_score(labels, pred), abs=1e-12)
            assert ours == pytest.approx(brute_force_auc(labels, pred), abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(5)
        ref, pred = rng.random((2, 80))
        assert roc_auc(P(ref, pred)) == pytest.approx(roc_auc(P(ref, np.exp(3 * pred))), abs=1e-12)

    def test_macro(self):
        ref = {"t1": {"A": 1, "B": 0}, "t2": {"A": 0, "B": 1}, "t3": {"A": 1, "B": 1}}
        pred = {"t1": {"A": 0.9, "B": 0.4}, "t2": {"A": 0.1, "B": 0.3}, "t3": {"A": 0.8, "B": 0.2}}
        pairs = pair_scores(ref, pred)
        auc_a = brute_force_auc([1, 0, 1], [0.9, 0.1, 0.8])
        auc_b = brute_force_auc([0, 1, 1], [0.4, 0.3, 0.2])
        assert roc_auc(pairs, averaging="macro") == pytest.approx((auc_a + auc_b) / 2)

    def test_degenerate(self):
        with pytest.raises(DegenerateLabels):
            roc_auc(P([1, 1], [0.2, 0.3]))

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            roc_auc(P([0, 1], [0, 1]), averaging="weighted")


class TestBCE:
    def test_half_at_zero(self):
        assert bce_soft_loss([0.5], [0.0]) == pytest.approx(math.log(2), abs=1e-12)

    def test_zero_target_at_zero(self):
        assert bce_soft_loss([0.0], [0.0]) == pytest.approx(math.log(2), abs=1e-12)

    def test_saturated(self):
        assert bce_soft_loss([1.0], [50.0]) < 1e-20
        assert math.isfinite(bce_soft_loss([0.0], [1000.0]))

    def test_naive_formula(self):
        rng = np.random.default_rng(6)
        p = rng.random(40)
        z = rng.normal(0, 3, 40)
        sig = 1 / (1 + np.exp(-z))
        naive = -np.mean(p * np.log(sig) + (1 - p) * np.log(1 - sig))
        assert bce_soft_loss(p, z) == pytest.approx(naive, rel=1e-10)

    def test_gradient_finite_differences(self):
        rng = np.random.default_rng(7)
        p = rng.random(10)
        z = rng.normal(0, 2, 10)
        grad = bce_soft_grad(p, z)
        h = 1e-6
        for i in range(10):
            dz = np.zeros(10)
            dz[i] = h
            fd = (bce_soft_loss(p, z + dz) - bce_soft_loss(p, z - dz)) / (2 * h)
            assert grad[i] == pytest.approx(fd, abs=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            bce_soft_loss([0.5, 0.5], [0.0])


class TestPairing:
    def test_first_missing_key_named(self):
        with pytest.raises(KeyMismatch) as exc:
            pair_scores({"t1": {"A": 1}}, {"t1": {"A": 0.5, "B": 0.1}, "t0": {"A": 0.2}})
        assert "t0" in str(exc.value)

    def test_extra_reference_ignored(self):
        pairs = pair_scores({"t1": {"A": 1, "B": 0}, "t2": {"A": 0}}, {"t1": {"A": 0.5}})
        assert pairs.keys == (("t1", "A"),)


def test_report_format():
    report = metric_report(P([0, 1, 1], [0.1, 0.9, 0.7]))
    assert list(report) == ["n_pairs", "rmse", "mae", "kl", "auc_micro", "auc_macro"]
    text = format_report(report)
    assert text.splitlines()[0] == "n_pairs: 3"
    assert text.splitlines()[4] == "auc_micro: 1.0000000000"


def test_report_degenerate_auc_is_nan():
    report = metric_report(P([1, 1], [0.5, 0.6]))
    assert math.isnan(report["auc_micro"])
