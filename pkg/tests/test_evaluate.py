import math

import numpy as np
import pytest

from moarm.data import FeatureSchema, FeatureSpec, category_bits
from moarm.evaluate import compute_metrics, mean_imputation, prior_sample_imputation
from moarm.masks import expand_feature_mask


def two_numeric_schema():
    return FeatureSchema(
        (FeatureSpec("a", "numeric"), FeatureSpec("b", "numeric", is_target=True))
    )


def test_rmse_mae_example():
    schema = two_numeric_schema()
    truth = np.array([[0.0, 2.0]])
    imputed = np.array([[0.0, 0.0]])
    masks = np.zeros((1, 2), dtype=np.uint8)  # both missing
    report = compute_metrics(truth, imputed, masks, schema)
    assert report.rmse == pytest.approx(math.sqrt(2))
    assert report.mae == pytest.approx(1.0)
    assert report.n_continuous_cells == 2


def test_identity_imputation_perfect():
    schema = FeatureSchema(
        (
            FeatureSpec("a", "numeric"),
            FeatureSpec("c", "categorical", 3, ("p", "q", "r")),
            FeatureSpec("b", "numeric", is_target=True),
        )
    )
    rng = np.random.default_rng(0)
    truth = rng.normal(size=(6, schema.width))
    truth[:, 1:3] = category_bits(rng.integers(0, 3, 6), 2)
    masks = expand_feature_mask((rng.random((6, 3)) > 0.5).astype(np.uint8), schema)
    report = compute_metrics(truth, truth.copy(), masks, schema)
    if report.rmse is not None:
        assert report.rmse == 0.0 and report.mae == 0.0
    if report.accuracy is not None:
        assert report.accuracy == 1.0


def test_observed_cells_ignored():
    schema = two_numeric_schema()
    truth = np.array([[1.0, 2.0], [3.0, 4.0]])
    imputed = truth.copy()
    imputed[0, 0] = 99.0  # observed cell corrupted: metrics must not move
    masks = np.array([[1, 0], [1, 0]], dtype=np.uint8)
    report = compute_metrics(truth, imputed, masks, schema)
    assert report.rmse == 0.0
    assert report.n_continuous_cells == 2


def test_no_missing_continuous_omits_rmse():
    schema = two_numeric_schema()
    truth = np.ones((3, 2))
    masks = np.ones((3, 2), dtype=np.uint8)
    report = compute_metrics(truth, truth, masks, schema)
    assert report.rmse is None and report.mae is None
    assert report.n_continuous_cells == 0


def test_aggregate_matches_independent_pass():
    # double-entry: aggregate RMSE equals RMSE over raw per-cell residuals
    schema = FeatureSchema(
        tuple(FeatureSpec(f"x{i}", "numeric", is_target=(i == 3)) for i in range(4))
    )
    rng = np.random.default_rng(1)
    truth = rng.normal(size=(50, 4))
    imputed = truth + rng.normal(scale=0.3, size=(50, 4))
    masks = (rng.random((50, 4)) > 0.5).astype(np.uint8)
    report = compute_metrics(truth, imputed, masks, schema)
    resid = (imputed - truth)[masks == 0]
    assert report.rmse == pytest.approx(float(np.sqrt(np.mean(resid**2))), rel=1e-12)
    assert report.mae == pytest.approx(float(np.mean(np.abs(resid))), rel=1e-12)


def test_categorical_accuracy_counts():
    schema = FeatureSchema(
        (
            FeatureSpec("c", "categorical", 4, ("a", "b", "ç", "d")),
            FeatureSpec("y", "numeric", is_target=True),
        )
    )
    codes_true = np.array([0, 1, 2, 3])
    codes_pred = np.array([0, 1, 0, 3])
    truth = np.zeros((4, schema.width))
    imputed = np.zeros((4, schema.width))
    truth[:, 0:2] = category_bits(codes_true, 2)
    imputed[:, 0:2] = category_bits(codes_pred, 2)
    masks = np.zeros((4, schema.width), dtype=np.uint8)
    masks[:, 2] = 1  # numeric observed; categorical missing everywhere
    report = compute_metrics(truth, imputed, masks, schema)
    assert report.accuracy == pytest.approx(0.75)
    assert report.n_categorical_cells == 4
    assert report.rmse is None


def test_mean_imputation_uses_observed_train_only():
    train = np.array([[1.0, 5.0], [3.0, 7.0], [100.0, 9.0]])
    train_masks = np.array([[1, 1], [1, 1], [0, 1]], dtype=np.uint8)
    test = np.array([[0.0, 0.0]])
    test_masks = np.array([[0, 1]], dtype=np.uint8)
    out = mean_imputation(train, train_masks, test, test_masks)
    assert out[0, 0] == pytest.approx(2.0)  # the 100.0 entry was unobserved
    assert out[0, 1] == 0.0  # observed cells untouched


def test_prior_sample_draws_from_observed_marginal():
    rng = np.random.default_rng(0)
    train = np.array([[1.0], [2.0], [3.0]])
    train_masks = np.ones((3, 1), dtype=np.uint8)
    test = np.zeros((40, 1))
    test_masks = np.zeros((40, 1), dtype=np.uint8)
    out = prior_sample_imputation(train, train_masks, test, test_masks, rng)
    assert set(np.unique(out)) <= {1.0, 2.0, 3.0}


def test_shape_mismatch_rejected():
    schema = two_numeric_schema()
    with pytest.raises(ValueError):
        compute_metrics(np.zeros((2, 2)), np.zeros((3, 2)), np.zeros((2, 2), dtype=np.uint8), schema)
