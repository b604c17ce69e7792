"""Observation masks and synthetic missingness mechanisms.

Missingness is drawn at the feature level (a categorical feature is observed
or missing as a unit) and expanded to the encoded element level where the
model lives.  Mechanisms:

* MCAR: every feature of every row independently missing with probability p.
* MNAR self-masking: features are split 50/50 into an input group A and a
  response group B.  Each B feature is paired round-robin with an A feature
  and goes missing with probability sigmoid(x_A + b), where x_A is the paired
  feature's standardized value and b is calibrated by bisection so the
  expected missing rate hits p.  Group A is then masked MCAR at rate p, so
  B's missingness depends on values that may themselves be unobserved.

All draws come from per-row counter-based streams, so a suite is a pure
function of (mechanism, rate, seed, shape) no matter how generation is
scheduled.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import streams
from .data import EncodedDataset, FeatureSchema, decode_categorical_matrix


@dataclass(frozen=True)
class ObservationMask:
    """Observed index set with its binary-vector encoding."""

    binary: np.ndarray  # (L,) uint8

    @property
    def width(self) -> int:
        return int(self.binary.shape[0])

    @property
    def observed_elements(self) -> np.ndarray:
        return np.flatnonzero(self.binary).astype(np.int64)

    @property
    def missing_elements(self) -> np.ndarray:
        return np.flatnonzero(self.binary == 0).astype(np.int64)

    @property
    def n_observed(self) -> int:
        return int(self.binary.sum())

    @staticmethod
    def from_elements(observed: np.ndarray, width: int) -> "ObservationMask":
        binary = np.zeros(width, dtype=np.uint8)
        binary[np.asarray(observed, dtype=np.int64)] = 1
        return ObservationMask(binary)


def validate_mask(binary: np.ndarray, observed_elements: np.ndarray, width: int) -> list[str]:
    """Check the index-set/binary bijection; returns violations, never raises."""
    problems = []
    binary = np.asarray(binary)
    observed = np.asarray(observed_elements)
    if binary.shape != (width,):
        problems.append(f"binary length {binary.shape} != ({width},)")
        return problems
    if not np.isin(binary, (0, 1)).all():
        problems.append("binary vector has entries outside {0,1}")
    if observed.size and (observed.min() < 0 or observed.max() >= width):
        problems.append("observed index out of range")
        return problems
    if len(set(observed.tolist())) != observed.size:
        problems.append("observed index set has duplicates")
    if int(binary.sum()) != observed.size:
        problems.append(f"binary sum {int(binary.sum())} != |observed| {observed.size}")
    expect = np.zeros(width, dtype=np.uint8)
    expect[observed.astype(np.int64) % max(width, 1)] = 1
    if problems == [] and not np.array_equal(expect, binary.astype(np.uint8)):
        problems.append("binary vector and index set disagree")
    return problems


@dataclass
class MaskSuite:
    mechanism: str  # "mcar" | "mnar"
    rate: float
    seed: int
    train: np.ndarray  # (N_train, L) uint8, 1 = observed
    test: np.ndarray | None = None  # drawn at test_rate (0.5 under the protocol)
    test_rate: float = 0.5

    @property
    def width(self) -> int:
        return int(self.train.shape[1])

    def row(self, index: int, split: str = "train") -> ObservationMask:
        mat = self.train if split == "train" else self.test
        return ObservationMask(mat[index])


def expand_feature_mask(feature_observed: np.ndarray, schema: FeatureSchema) -> np.ndarray:
    """Element j is observed iff its owning feature is observed.

    Accepts a (F,) vector or an (N, F) matrix; returns uint8 of matching rank.
    """
    feats = np.asarray(feature_observed, dtype=np.uint8)
    if feats.shape[-1] != schema.n_features:
        raise ValueError(f"feature mask width {feats.shape[-1]} != {schema.n_features} features")
    return feats[..., schema.element_owner()].astype(np.uint8)


def _mcar_feature_rows(n_rows: int, n_features: int, rate: float, seed: int, salt: int) -> np.ndarray:
    out = np.empty((n_rows, n_features), dtype=np.uint8)
    for r in range(n_rows):
        g = streams.stream(seed, streams.MASK, r, salt)
        out[r] = (g.random(n_features) >= rate).astype(np.uint8)
    return out


def gen_mcar(
    n_rows: int,
    schema: FeatureSchema,
    rate: float,
    seed: int,
    n_test_rows: int = 0,
    test_rate: float = 0.5,
) -> MaskSuite:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"missing rate must be in [0, 1), got {rate}")
    train_feats = _mcar_feature_rows(n_rows, schema.n_features, rate, seed, salt=0)
    train = expand_feature_mask(train_feats, schema)
    test = None
    if n_test_rows:
        test_feats = _mcar_feature_rows(n_test_rows, schema.n_features, test_rate, seed, salt=1)
        test = expand_feature_mask(test_feats, schema)
    return MaskSuite("mcar", rate, seed, train, test, test_rate)


def _feature_scalar_values(dataset: EncodedDataset) -> np.ndarray:
    """One standardized scalar per feature: z-scored numerics / category codes."""
    schema = dataset.schema
    out = np.empty((dataset.n_rows, schema.n_features), dtype=np.float64)
    for i, spec in enumerate(schema.specs):
        if spec.kind == "numeric":
            col = dataset.values[:, schema.offsets[i]]
        else:
            col = decode_categorical_matrix(dataset.values, schema, i).astype(np.float64)
        std = col.std()
        out[:, i] = (col - col.mean()) / (std if std > 0 else 1.0)
    return out


def _calibrate_offset(x: np.ndarray, rate: float) -> float:
    """Bisect b so that mean(sigmoid(x + b)) == rate."""
    lo, hi = -30.0, 30.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if np.mean(1.0 / (1.0 + np.exp(-(x + mid)))) < rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _mnar_feature_rows(
    values: np.ndarray,
    group_a: np.ndarray,
    group_b: np.ndarray,
    pair_of_b: np.ndarray,
    offsets: np.ndarray,
    rate: float,
    seed: int,
    salt: int,
) -> np.ndarray:
    n_rows, n_features = values.shape
    probs = np.zeros((n_rows, n_features), dtype=np.float64)
    probs[:, group_a] = rate
    probs[:, group_b] = 1.0 / (1.0 + np.exp(-(values[:, pair_of_b] + offsets)))
    out = np.empty((n_rows, n_features), dtype=np.uint8)
    for r in range(n_rows):
        g = streams.stream(seed, streams.MASK, r, salt)
        out[r] = (g.random(n_features) >= probs[r]).astype(np.uint8)
    return out


def gen_mnar_selfmask(
    train: EncodedDataset,
    rate: float,
    seed: int,
    test: EncodedDataset | None = None,
    test_rate: float = 0.5,
    logistic: tuple[np.ndarray, np.ndarray] | None = None,
) -> MaskSuite:
    """Self-masking MNAR suite; see the module docstring for the protocol.

    ``logistic`` overrides the calibrated per-B-feature (pair index, offset)
    arrays; by default pairing is round-robin and offsets are bisected so each
    B feature's expected missing rate equals ``rate``.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"missing rate must be in [0, 1), got {rate}")
    schema = train.schema
    n_features = schema.n_features
    if n_features < 2:
        raise ValueError("self-masking needs at least 2 features")
    perm = streams.stream(seed, streams.MASK, 0, 2).permutation(n_features)
    half = n_features // 2
    group_a = np.sort(perm[:half])
    group_b = np.sort(perm[half:])

    scalars_train = _feature_scalar_values(train)
    if logistic is not None:
        pair_of_b, offsets = logistic
        pair_of_b = np.asarray(pair_of_b, dtype=np.int64)
        offsets = np.asarray(offsets, dtype=np.float64)
    else:
        pair_of_b = group_a[np.arange(group_b.size) % group_a.size]
        offsets = np.array(
            [_calibrate_offset(scalars_train[:, a], rate) for a in pair_of_b], dtype=np.float64
        )
    train_feats = _mnar_feature_rows(scalars_train, group_a, group_b, pair_of_b, offsets, rate, seed, salt=0)
    suite = MaskSuite("mnar", rate, seed, expand_feature_mask(train_feats, schema))
    if test is not None:
        scalars_test = _feature_scalar_values(test)
        test_offsets = np.array(
            [_calibrate_offset(scalars_test[:, a], test_rate) for a in pair_of_b], dtype=np.float64
        )
        test_feats = _mnar_feature_rows(
            scalars_test, group_a, group_b, pair_of_b, test_offsets, test_rate, seed, salt=1
        )
        suite.test = expand_feature_mask(test_feats, schema)
        suite.test_rate = test_rate
    return suite


def make_suite(
    mechanism: str,
    rate: float,
    seed: int,
    schema: FeatureSchema,
    train: EncodedDataset,
    test: EncodedDataset | None = None,
    test_rate: float = 0.5,
) -> MaskSuite:
    if mechanism == "mcar":
        return gen_mcar(train.n_rows, schema, rate, seed, test.n_rows if test is not None else 0, test_rate)
    if mechanism == "mnar":
        return gen_mnar_selfmask(train, rate, seed, test, test_rate)
    raise ValueError(f"unknown mechanism {mechanism!r}")


# ---------------------------------------------------------------------------
# on-disk format: one header line of key=value pairs, then bitstring rows


def _write_split(path: str, mat: np.ndarray, suite: MaskSuite, split: str, rate: float) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"mechanism={suite.mechanism} rate={rate:.6g} seed={suite.seed} "
            f"L={mat.shape[1]} split={split} rows={mat.shape[0]}\n"
        )
        for row in mat:
            fh.write("".join("1" if b else "0" for b in row))
            fh.write("\n")


def save_suite(suite: MaskSuite, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    _write_split(os.path.join(out_dir, "masks_train.txt"), suite.train, suite, "train", suite.rate)
    if suite.test is not None:
        _write_split(os.path.join(out_dir, "masks_test.txt"), suite.test, suite, "test", suite.test_rate)


def _read_split(path: str) -> tuple[dict, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = dict(kv.split("=", 1) for kv in fh.readline().split())
        rows = [line.strip() for line in fh if line.strip()]
    width = int(header["L"])
    mat = np.empty((len(rows), width), dtype=np.uint8)
    for i, line in enumerate(rows):
        if len(line) != width:
            raise ValueError(f"{path}: row {i} has {len(line)} bits, expected {width}")
        mat[i] = np.frombuffer(line.encode(), dtype=np.uint8) - ord("0")
    if len(rows) != int(header["rows"]):
        raise ValueError(f"{path}: row count mismatch with header")
    return header, mat


def load_suite(mask_dir: str) -> MaskSuite:
    header, train = _read_split(os.path.join(mask_dir, "masks_train.txt"))
    suite = MaskSuite(header["mechanism"], float(header["rate"]), int(header["seed"]), train)
    test_path = os.path.join(mask_dir, "masks_test.txt")
    if os.path.exists(test_path):
        test_header, test = _read_split(test_path)
        suite.test = test
        suite.test_rate = float(test_header["rate"])
    return suite
