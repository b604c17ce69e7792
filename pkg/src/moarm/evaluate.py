"""Imputation metrics on held-out missing entries.

RMSE/MAE cover continuous elements in standardized space; accuracy covers
categorical features after decoding bit blocks back to category codes.  Only
cells that were missing at evaluation time contribute; observed cells are
ignored entirely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import FeatureSchema, decode_categorical_matrix


@dataclass
class MetricReport:
    rmse: float | None
    mae: float | None
    accuracy: float | None
    per_feature: dict[str, dict] = field(default_factory=dict)
    n_continuous_cells: int = 0
    n_categorical_cells: int = 0
    tags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "mae": self.mae,
            "accuracy": self.accuracy,
            "n_continuous_cells": self.n_continuous_cells,
            "n_categorical_cells": self.n_categorical_cells,
            "per_feature": self.per_feature,
            "tags": self.tags,
        }


def compute_metrics(
    truth: np.ndarray,
    imputed: np.ndarray,
    masks: np.ndarray,
    schema: FeatureSchema,
    tags: dict | None = None,
) -> MetricReport:
    truth = np.asarray(truth, dtype=np.float64)
    imputed = np.asarray(imputed, dtype=np.float64)
    m = np.asarray(masks, dtype=np.uint8)
    if truth.shape != imputed.shape or truth.shape != m.shape:
        raise ValueError("truth, imputed and masks must share one shape")

    per_feature: dict[str, dict] = {}
    sq_sum = abs_sum = 0.0
    n_cont = 0
    n_cat = n_cat_hit = 0
    for i, spec in enumerate(schema.specs):
        sl = schema.feature_slice(i)
        if spec.kind == "numeric":
            missing = m[:, sl.start] == 0
            count = int(missing.sum())
            if count == 0:
                continue
            resid = imputed[missing, sl.start] - truth[missing, sl.start]
            sq = float(np.sum(resid**2))
            ab = float(np.sum(np.abs(resid)))
            per_feature[spec.name] = {
                "rmse": float(np.sqrt(sq / count)),
                "mae": ab / count,
                "count": count,
            }
            sq_sum += sq
            abs_sum += ab
            n_cont += count
        else:
            missing = m[:, sl.start] == 0  # feature-level masks: bits move together
            count = int(missing.sum())
            if count == 0:
                continue
            t_codes = decode_categorical_matrix(truth[missing], schema, i)
            p_codes = decode_categorical_matrix(imputed[missing], schema, i)
            hits = int(np.sum(t_codes == p_codes))
            per_feature[spec.name] = {"accuracy": hits / count, "count": count}
            n_cat += count
            n_cat_hit += hits

    return MetricReport(
        rmse=float(np.sqrt(sq_sum / n_cont)) if n_cont else None,
        mae=abs_sum / n_cont if n_cont else None,
        accuracy=n_cat_hit / n_cat if n_cat else None,
        per_feature=per_feature,
        n_continuous_cells=n_cont,
        n_categorical_cells=n_cat,
        tags=dict(tags or {}),
    )


def mean_imputation(train_values: np.ndarray, train_masks: np.ndarray, test_values: np.ndarray, test_masks: np.ndarray) -> np.ndarray:
    """Column means of observed training entries written into missing test cells."""
    tm = train_masks.astype(bool)
    col_sums = np.where(tm, train_values, 0.0).sum(axis=0)
    col_counts = tm.sum(axis=0)
    means = np.where(col_counts > 0, col_sums / np.maximum(col_counts, 1), 0.0)
    return np.where(test_masks.astype(bool), test_values, means)


def prior_sample_imputation(
    train_values: np.ndarray,
    train_masks: np.ndarray,
    test_values: np.ndarray,
    test_masks: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Fill each missing cell with a draw from that column's observed marginal."""
    out = test_values.copy()
    for j in range(test_values.shape[1]):
        pool = train_values[train_masks[:, j].astype(bool), j]
        rows = np.flatnonzero(test_masks[:, j] == 0)
        if rows.size and pool.size:
            out[rows, j] = pool[rng.integers(0, pool.size, size=rows.size)]
    return out
