"""Sequential active information acquisition.

Candidates are original features (a categorical candidate is decoded before
binning, a numeric one is binned on its empirical range).  Each step draws
one batch of K full-row conditional completions, scores every unobserved
non-target feature by plug-in binned mutual information with the target, and
greedily acquires the top feature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import ModelBundle
from .data import FeatureSchema, category_bits, decode_categorical_matrix
from .kernels import joint_counts
from .sampling import impute_batch


@dataclass(frozen=True)
class BinningSpec:
    bins: int = 5  # equal-width bins per continuous variable

    def __post_init__(self):
        if self.bins < 2:
            raise ValueError("need at least 2 bins")


@dataclass(frozen=True)
class MiEstimate:
    feature: int
    value: float  # nats, clamped >= 0
    n_samples: int
    bins: int


@dataclass
class PredictiveSummary:
    kind: str  # "numeric" | "categorical"
    mean: float | None = None
    std: float | None = None
    raw_mean: float | None = None
    raw_std: float | None = None
    category: object | None = None
    frequencies: dict | None = None

    def to_dict(self) -> dict:
        if self.kind == "numeric":
            return {
                "kind": "numeric",
                "mean": self.mean,
                "std": self.std,
                "raw_mean": self.raw_mean,
                "raw_std": self.raw_std,
            }
        return {"kind": "categorical", "category": self.category, "frequencies": self.frequencies}


@dataclass
class SaiaStep:
    feature: int
    feature_name: str
    mi: float
    observed_value: object
    prediction: PredictiveSummary
    error_std: float
    error_raw: float


@dataclass
class SaiaTrace:
    prior_prediction: PredictiveSummary
    prior_error_std: float
    prior_error_raw: float
    steps: list[SaiaStep] = field(default_factory=list)

    @property
    def acquired(self) -> list[int]:
        return [s.feature for s in self.steps]


def bin_indices(values: np.ndarray, spec: BinningSpec) -> tuple[np.ndarray, int]:
    """Equal-width bins over the empirical min/max of this sample set."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        return np.zeros(v.shape, dtype=np.int64), 1
    idx = np.floor((v - lo) / (hi - lo) * spec.bins).astype(np.int64)
    return np.clip(idx, 0, spec.bins - 1), spec.bins


def plugin_mi(iu: np.ndarray, iv: np.ndarray, n_u: int, n_v: int) -> float:
    """Histogram plug-in mutual information in nats, with 0*log(0) := 0."""
    n = iu.size
    counts = joint_counts(np.ascontiguousarray(iu), np.ascontiguousarray(iv), n_u, n_v)
    pj = counts / n
    pu = pj.sum(axis=1)
    pv = pj.sum(axis=0)
    nz = pj > 0
    outer = pu[:, None] * pv[None, :]
    mi = float(np.sum(pj[nz] * np.log(pj[nz] / outer[nz])))
    return max(mi, 0.0)


def _feature_sample_column(samples: np.ndarray, schema: FeatureSchema, feature: int) -> np.ndarray:
    spec = schema.specs[feature]
    if spec.kind == "numeric":
        return samples[:, schema.offsets[feature]]
    return decode_categorical_matrix(samples, schema, feature).astype(np.float64)


def estimate_mi(
    target_samples: np.ndarray,
    cand_samples: np.ndarray,
    target_kind: str,
    cand_kind: str,
    spec: BinningSpec,
    target_cardinality: int = 0,
    cand_cardinality: int = 0,
) -> float:
    """MI between joint conditional draws of the target and one candidate."""
    if target_samples.size < 2:
        raise ValueError("need at least 2 samples")
    if target_kind == "categorical":
        iu, n_u = target_samples.astype(np.int64), target_cardinality
    else:
        iu, n_u = bin_indices(target_samples, spec)
    if cand_kind == "categorical":
        iv, n_v = cand_samples.astype(np.int64), cand_cardinality
    else:
        iv, n_v = bin_indices(cand_samples, spec)
    return plugin_mi(iu, iv, n_u, n_v)


# ---------------------------------------------------------------------------
# observed-state handling (feature-level observations, element-level model)


def encode_observed(
    bundle: ModelBundle, observed: dict[int, object]
) -> tuple[np.ndarray, np.ndarray]:
    """Standardized encoded row + element mask from a feature->value map."""
    schema = bundle.schema
    x = np.zeros(schema.width)
    mask = np.zeros(schema.width, dtype=np.uint8)
    for feat, value in observed.items():
        spec = schema.specs[feat]
        sl = schema.feature_slice(feat)
        if spec.kind == "numeric":
            v = float(value)
            if not math.isfinite(v):
                raise ValueError(f"non-finite value for feature {spec.name!r}")
            x[sl.start] = (v - bundle.standardization.mean[sl.start]) / bundle.standardization.std[sl.start]
        else:
            code = _category_code(spec, value)
            x[sl] = category_bits(np.array([code]), spec.bit_width)[0]
        mask[sl] = 1
    return x, mask


def _category_code(spec, value) -> int:
    if isinstance(value, str):
        if value not in spec.categories:
            raise ValueError(f"unknown category {value!r} for feature {spec.name!r}")
        return spec.categories.index(value)
    code = int(value)
    if not 0 <= code < spec.cardinality:
        raise ValueError(f"category code {code} out of range for feature {spec.name!r}")
    return code


def draw_joint_samples(
    bundle: ModelBundle,
    observed: dict[int, object],
    n_samples: int,
    seed: int,
    salt: int = 0,
    n_steps: int | None = None,
) -> np.ndarray:
    """One batch of full-row conditional completions, shared by all candidates.

    Draws are always unweighted: importance weights shift point imputations,
    not the conditional samples MI estimation consumes.
    """
    x, mask = encode_observed(bundle, observed)
    result = impute_batch(
        x[None, :],
        mask[None, :],
        n_samples,
        bundle,
        mode="mcar",
        n_steps=n_steps,
        seed=seed,
        row_ids=np.array([salt], dtype=np.int64),
    )[0]
    return result.samples


def rank_candidates(
    bundle: ModelBundle,
    observed: dict[int, object],
    n_samples: int = 100,
    spec: BinningSpec = BinningSpec(),
    seed: int = 0,
    salt: int = 0,
    samples: np.ndarray | None = None,
) -> list[MiEstimate]:
    """Score unobserved non-target features by MI with the target, descending.

    Ties break toward the lower feature index.
    """
    schema = bundle.schema
    target = schema.target_index
    if target is None:
        raise ValueError("schema has no target feature")
    candidates = [
        i for i in range(schema.n_features) if i != target and i not in observed
    ]
    if not candidates:
        raise ValueError("no unobserved candidates remain")
    if samples is None:
        samples = draw_joint_samples(bundle, observed, n_samples, seed, salt)
    tgt_spec = schema.specs[target]
    tgt_col = _feature_sample_column(samples, schema, target)
    out = []
    for cand in candidates:
        c_spec = schema.specs[cand]
        value = estimate_mi(
            tgt_col,
            _feature_sample_column(samples, schema, cand),
            tgt_spec.kind,
            c_spec.kind,
            spec,
            tgt_spec.cardinality,
            c_spec.cardinality,
        )
        out.append(MiEstimate(cand, value, samples.shape[0], spec.bins))
    out.sort(key=lambda e: (-e.value, e.feature))
    return out


def predict_target(
    bundle: ModelBundle,
    observed: dict[int, object],
    n_samples: int = 100,
    seed: int = 0,
    salt: int = 0,
    samples: np.ndarray | None = None,
) -> PredictiveSummary:
    """Predictive summary of the target from conditional completions."""
    schema = bundle.schema
    target = schema.target_index
    if target is None:
        raise ValueError("schema has no target feature")
    if samples is None:
        samples = draw_joint_samples(bundle, observed, n_samples, seed, salt)
    spec = schema.specs[target]
    col = _feature_sample_column(samples, schema, target)
    if spec.kind == "numeric":
        j = schema.offsets[target]
        mean, std = float(col.mean()), float(col.std())
        scale, shift = bundle.standardization.std[j], bundle.standardization.mean[j]
        return PredictiveSummary(
            "numeric", mean=mean, std=std, raw_mean=mean * scale + shift, raw_std=std * scale
        )
    codes = col.astype(np.int64)
    freq = np.bincount(codes, minlength=spec.cardinality) / codes.size
    best = int(np.argmax(freq))  # argmax takes the lowest index on ties
    labels = spec.categories if spec.categories else tuple(range(spec.cardinality))
    return PredictiveSummary(
        "categorical",
        category=labels[best],
        frequencies={str(labels[k]): float(freq[k]) for k in range(spec.cardinality)},
    )


def _target_errors(bundle: ModelBundle, summary: PredictiveSummary, truth_row: np.ndarray):
    """(standardized-scale error, raw-scale error) against the true row."""
    schema = bundle.schema
    target = schema.target_index
    spec = schema.specs[target]
    if spec.kind == "numeric":
        j = schema.offsets[target]
        err_std = abs(summary.mean - float(truth_row[j]))
        truth_raw = float(truth_row[j]) * bundle.standardization.std[j] + bundle.standardization.mean[j]
        return err_std, abs(summary.raw_mean - truth_raw)
    truth_code = int(decode_categorical_matrix(truth_row[None, :], schema, target)[0])
    labels = spec.categories if spec.categories else tuple(range(spec.cardinality))
    miss = 0.0 if summary.category == labels[truth_code] else 1.0
    return miss, miss


def saia_run(
    truth_row: np.ndarray,
    budget: int,
    bundle: ModelBundle,
    n_samples: int = 100,
    spec: BinningSpec = BinningSpec(),
    seed: int = 0,
    row_id: int = 0,
) -> SaiaTrace:
    """Greedy acquisition loop on one fully hidden row.

    ``truth_row`` is the standardized encoded ground truth; acquiring a
    feature reveals its true value.  The target stays hidden throughout.
    """
    schema = bundle.schema
    target = schema.target_index
    if target is None:
        raise ValueError("schema has no target feature")
    n_candidates = schema.n_features - 1
    if budget > n_candidates:
        raise ValueError(f"budget {budget} exceeds {n_candidates} candidate features")

    observed: dict[int, object] = {}
    samples = draw_joint_samples(bundle, observed, n_samples, seed, salt=_salt(row_id, 0))
    prior = predict_target(bundle, observed, samples=samples)
    e_std, e_raw = _target_errors(bundle, prior, truth_row)
    trace = SaiaTrace(prior, e_std, e_raw)

    for step in range(budget):
        ranking = rank_candidates(bundle, observed, n_samples, spec, samples=samples)
        best = ranking[0]
        observed[best.feature] = _true_feature_value(bundle, truth_row, best.feature)
        samples = draw_joint_samples(
            bundle, observed, n_samples, seed, salt=_salt(row_id, step + 1)
        )
        summary = predict_target(bundle, observed, samples=samples)
        e_std, e_raw = _target_errors(bundle, summary, truth_row)
        trace.steps.append(
            SaiaStep(
                best.feature,
                schema.specs[best.feature].name,
                best.value,
                observed[best.feature],
                summary,
                e_std,
                e_raw,
            )
        )
    return trace


def _salt(row_id: int, step: int) -> int:
    return row_id * 4096 + step


def _true_feature_value(bundle: ModelBundle, truth_row: np.ndarray, feature: int):
    schema = bundle.schema
    spec = schema.specs[feature]
    if spec.kind == "numeric":
        j = schema.offsets[feature]
        return float(truth_row[j]) * bundle.standardization.std[j] + bundle.standardization.mean[j]
    code = int(decode_categorical_matrix(truth_row[None, :], schema, feature)[0])
    return spec.categories[code] if spec.categories else code


def write_trace(trace: SaiaTrace, path: str) -> None:
    """One structured-text record per acquisition step."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"step=0 feature=- mi=- value=- prediction={trace.prior_prediction.to_dict()} "
            f"error_std={trace.prior_error_std:.6f} error_raw={trace.prior_error_raw:.6f}\n"
        )
        for n, s in enumerate(trace.steps, start=1):
            fh.write(
                f"step={n} feature={s.feature_name} mi={s.mi:.6f} value={s.observed_value} "
                f"prediction={s.prediction.to_dict()} "
                f"error_std={s.error_std:.6f} error_raw={s.error_raw:.6f}\n"
            )
