import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import lin_ground_truth_piece
from dynalens.evaluate import (MetricReport, fold_splits,
                               loo_cross_validation, pearson_r, r_squared,
                               report_csv, report_table)
from dynalens.models import TrainConfig


def test_r_squared_identities():
    target = np.array([0.3, 1.2, -0.5, 2.0])
    assert r_squared(target, target) == 1.0
    assert r_squared(np.full(4, target.mean()), target) == pytest.approx(0.0)


def test_r_squared_reversed_ramp_is_minus_three():
    assert r_squared([2.0, 1.0, 0.0], [0.0, 1.0, 2.0]) == -3.0


def test_r_squared_zero_variance_errors():
    with pytest.raises(ValueError, match="zero target variance"):
        r_squared([0.0, 1.0], [1.0, 1.0])


def test_pearson_identities():
    target = np.array([0.1, 0.9, -0.4, 1.5])
    assert pearson_r(target, target) == pytest.approx(1.0)
    assert pearson_r(-target, target) == pytest.approx(-1.0)


def test_pearson_hand_case():
    # cov = 1, std_t = sqrt(2/3), std_p = sqrt(14)/3
    expected = 1.0 / (np.sqrt(2.0 / 3.0) * np.sqrt(14.0) / 3.0)
    assert pearson_r([0.0, 2.0, 3.0], [0.0, 1.0, 2.0]) \
        == pytest.approx(expected, abs=1e-12)
    assert f"{pearson_r([0.0, 2.0, 3.0], [0.0, 1.0, 2.0]):.4f}" == "0.9820"


def test_pearson_zero_variance_errors():
    with pytest.raises(ValueError, match="zero variance"):
        pearson_r([1.0, 1.0], [0.0, 1.0])
    with pytest.raises(ValueError, match="zero variance"):
        pearson_r([0.0, 1.0], [1.0, 1.0])


def test_constant_offset_separates_the_metrics():
    target = np.array([0.0, 1.0, 2.0, 3.0])
    pred = target + 1.0
    assert pearson_r(pred, target) == pytest.approx(1.0)
    assert r_squared(pred, target) < 1.0


@given(scale=st.floats(0.1, 10.0), shift=st.floats(-5.0, 5.0))
@settings(max_examples=30, deadline=None)
def test_pearson_invariant_to_positive_affine(scale, shift):
    rng = np.random.default_rng(0)
    target = rng.normal(size=24)
    pred = rng.normal(size=24) + 0.5 * target
    base = pearson_r(pred, target)
    assert pearson_r(scale * pred + shift, target) \
        == pytest.approx(base, abs=1e-9)
    assert pearson_r(pred, scale * target + shift) \
        == pytest.approx(base, abs=1e-9)


def test_r_squared_not_affine_invariant_counterexample():
    rng = np.random.default_rng(1)
    target = rng.normal(size=24)
    pred = target + rng.normal(0, 0.1, size=24)
    assert r_squared(2.0 * pred + 1.0, target) != pytest.approx(
        r_squared(pred, target), abs=1e-6)


# --- leave-one-out harness --------------------------------------------------

def _corpus(n=3):
    return [(f"p{i}", *lin_ground_truth_piece(i)) for i in range(n)]


def test_loo_noise_free_recovery():
    reports = loo_cross_validation(
        _corpus(), "lin",
        TrainConfig(exact_lin=True, l2_penalty=0.0, seed=3),
        validation_count=1)
    assert len(reports) == 3
    for rep in reports:
        assert rep.error is None
        assert rep.r_squared >= 0.99
        assert rep.pearson_r >= 0.995


def test_loo_requires_three_pieces():
    with pytest.raises(ValueError, match="at least 3"):
        loo_cross_validation(_corpus(2), "lin", TrainConfig(),
                             validation_count=0)


def test_loo_validation_count_bound():
    with pytest.raises(ValueError, match="validation_count"):
        loo_cross_validation(_corpus(3), "lin", TrainConfig(),
                             validation_count=2)


def test_loo_is_deterministic_and_job_independent():
    config = TrainConfig(learning_rate=0.05, max_epochs=40, patience=40,
                         hidden_size=4, seed=11)
    runs = [loo_cross_validation(_corpus(4), "ffnn", config,
                                 validation_count=1, jobs=jobs)
            for jobs in (1, 4, 1)]
    assert runs[0] == runs[1] == runs[2]


def test_fold_splits_are_disjoint():
    for i, train_idx, val_idx, _ in fold_splits(8, seed=5,
                                                validation_count=3):
        assert i not in train_idx
        assert i not in val_idx
        assert not set(train_idx) & set(val_idx)
        assert len(train_idx) + len(val_idx) == 7


def test_fold_splits_deterministic():
    a = list(fold_splits(6, seed=9, validation_count=2))
    b = list(fold_splits(6, seed=9, validation_count=2))
    assert a == b


def test_failed_fold_is_reported_not_dropped():
    config = TrainConfig(learning_rate=1e9, max_epochs=10, patience=10,
                         hidden_size=4, seed=0)
    reports = loo_cross_validation(_corpus(3), "ffnn", config,
                                   validation_count=0)
    assert len(reports) == 3
    assert all(rep.error is not None for rep in reports)
    assert all(np.isnan(rep.r_squared) for rep in reports)


def test_report_csv_and_table():
    reports = [MetricReport("a", "lin", 0.5, 0.7),
               MetricReport("b", "lin", float("nan"), float("nan"),
                            error="diverged")]
    csv = report_csv(reports)
    assert csv.splitlines()[0] == "piece_id,model,r2,r"
    assert "a,lin,0.5,0.69999999999999996" in csv
    table = report_table(reports)
    assert "failed" in table and "0.5000" in table
