"""Tabular schemas and the encoded feature space.

Raw tables are heterogeneous (numeric and categorical columns, one optional
target column).  The model operates on a flat real vector of dimension L:
numeric columns pass through one element each, categorical columns become
big-endian bit blocks of width ceil(log2 C), and the target column is moved
to the end of its kind group (numerics end with a numeric target, the
categorical block ends with a categorical target).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import streams

STD_FLOOR = 1e-6


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str  # "numeric" | "categorical"
    cardinality: int = 0
    categories: tuple[str, ...] = ()
    is_target: bool = False

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise SchemaError(f"unknown feature kind {self.kind!r}")
        if self.kind == "categorical" and self.cardinality < 2:
            raise SchemaError(f"column {self.name!r} needs >= 2 categories, got {self.cardinality}")

    @property
    def bit_width(self) -> int:
        if self.kind == "numeric":
            return 1
        return max(1, math.ceil(math.log2(self.cardinality)))


@dataclass(frozen=True)
class FeatureSchema:
    specs: tuple[FeatureSpec, ...]

    def __post_init__(self):
        if sum(1 for s in self.specs if s.is_target) > 1:
            raise SchemaError("at most one target feature allowed")

    @property
    def n_features(self) -> int:
        return len(self.specs)

    @property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for s in self.specs:
            out.append(acc)
            acc += s.bit_width
        return tuple(out)

    @property
    def width(self) -> int:
        return sum(s.bit_width for s in self.specs)

    @property
    def target_index(self) -> int | None:
        for i, s in enumerate(self.specs):
            if s.is_target:
                return i
        return None

    def feature_slice(self, i: int) -> slice:
        off = self.offsets[i]
        return slice(off, off + self.specs[i].bit_width)

    def numeric_element_indices(self) -> np.ndarray:
        idx = [self.offsets[i] for i, s in enumerate(self.specs) if s.kind == "numeric"]
        return np.asarray(idx, dtype=np.int64)

    def element_owner(self) -> np.ndarray:
        """Feature index owning each encoded element."""
        owner = np.empty(self.width, dtype=np.int64)
        for i, s in enumerate(self.specs):
            owner[self.feature_slice(i)] = i
        return owner

    def element_names(self) -> list[str]:
        names = []
        for s in self.specs:
            if s.kind == "numeric":
                names.append(s.name)
            else:
                names.extend(f"{s.name}.bit{k}" for k in range(s.bit_width))
        return names

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "features": [
                {
                    "name": s.name,
                    "kind": s.kind,
                    "cardinality": s.cardinality,
                    "categories": list(s.categories),
                    "is_target": s.is_target,
                    "offset": self.offsets[i],
                    "bit_width": s.bit_width,
                }
                for i, s in enumerate(self.specs)
            ],
        }

    @staticmethod
    def from_dict(d: dict) -> "FeatureSchema":
        specs = tuple(
            FeatureSpec(
                name=f["name"],
                kind=f["kind"],
                cardinality=f.get("cardinality", 0),
                categories=tuple(f.get("categories", ())),
                is_target=f.get("is_target", False),
            )
            for f in d["features"]
        )
        schema = FeatureSchema(specs)
        if schema.width != d.get("width", schema.width):
            raise SchemaError("schema width mismatch in sidecar")
        return schema

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Standardization:
    """Per-element shift/scale; identity (0, 1) on categorical bit elements."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "Standardization":
        return Standardization(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))

    @staticmethod
    def identity(width: int) -> "Standardization":
        return Standardization(np.zeros(width), np.ones(width))


@dataclass
class EncodedDataset:
    values: np.ndarray  # (N, L) float64
    schema: FeatureSchema
    standardization: Standardization | None = None
    split_tag: str = "train"

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]


@dataclass
class RawTable:
    names: list[str]
    kinds: list[str]
    columns: list[list]  # numeric columns hold floats, categorical hold str
    n_rows: int = field(init=False)

    def __post_init__(self):
        self.n_rows = len(self.columns[0]) if self.columns else 0


def load_table(path: str) -> RawTable:
    """Read a delimited text table and type its columns.

    A column is numeric when every non-empty cell parses as a finite float;
    otherwise it is categorical.  Empty cells are rejected later, at encode
    time (masks are synthesized separately, never inferred from the file).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: empty table")
    names = [h.strip() for h in rows[0]]
    width = len(names)
    body = rows[1:]
    if not body:
        raise ValueError(f"{path}: header only, no data rows")
    for r, row in enumerate(body):
        if len(row) != width:
            raise ValueError(f"{path}: ragged row {r + 2} (expected {width} cells, got {len(row)})")

    columns: list[list] = []
    kinds: list[str] = []
    for c in range(width):
        cells = [row[c].strip() for row in body]
        parsed = _try_numeric(cells)
        if parsed is not None:
            kinds.append("numeric")
            columns.append(parsed)
        else:
            kinds.append("categorical")
            columns.append(cells)
    return RawTable(names, kinds, columns)


def _try_numeric(cells: list[str]) -> list[float] | None:
    out: list[float] = []
    saw_value = False
    for cell in cells:
        if cell == "":
            out.append(math.nan)
            continue
        try:
            v = float(cell)
        except ValueError:
            return None
        saw_value = True
        out.append(v)
    return out if saw_value else None


def infer_schema(table: RawTable, target_name: str) -> FeatureSchema:
    if target_name not in table.names:
        raise SchemaError(f"target column {target_name!r} not in table")
    num_specs: list[FeatureSpec] = []
    cat_specs: list[FeatureSpec] = []
    num_target: list[FeatureSpec] = []
    cat_target: list[FeatureSpec] = []
    for name, kind, col in zip(table.names, table.kinds, table.columns):
        is_target = name == target_name
        if kind == "numeric":
            spec = FeatureSpec(name, "numeric", is_target=is_target)
            (num_target if is_target else num_specs).append(spec)
        else:
            cats = tuple(sorted(set(col)))
            if len(cats) < 2:
                raise SchemaError(f"column {name!r} has a single distinct category")
            spec = FeatureSpec(name, "categorical", len(cats), cats, is_target)
            (cat_target if is_target else cat_specs).append(spec)
    ordered = num_specs + num_target + cat_specs + cat_target
    return FeatureSchema(tuple(ordered))


def encode_table(table: RawTable, schema: FeatureSchema, split_tag: str = "train") -> EncodedDataset:
    values = np.zeros((table.n_rows, schema.width), dtype=np.float64)
    for i, spec in enumerate(schema.specs):
        col = table.columns[table.names.index(spec.name)]
        sl = schema.feature_slice(i)
        if spec.kind == "numeric":
            arr = np.asarray(col, dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                bad = int(np.flatnonzero(~np.isfinite(arr))[0])
                raise ValueError(f"column {spec.name!r}: non-finite numeric cell at row {bad}")
            values[:, sl.start] = arr
        else:
            lookup = {c: k for k, c in enumerate(spec.categories)}
            try:
                codes = np.array([lookup[v] for v in col], dtype=np.int64)
            except KeyError as e:
                raise ValueError(f"column {spec.name!r}: unknown category {e.args[0]!r}") from None
            values[:, sl] = category_bits(codes, spec.bit_width)
    return EncodedDataset(values, schema, split_tag=split_tag)


def infer_and_encode_schema(table: RawTable, target_name: str) -> tuple[FeatureSchema, EncodedDataset]:
    schema = infer_schema(table, target_name)
    return schema, encode_table(table, schema)


def category_bits(codes: np.ndarray, width: int) -> np.ndarray:
    """Big-endian bit expansion: code 2 at width 2 becomes [1, 0]."""
    codes = np.asarray(codes, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1)
    return ((codes[..., None] >> shifts) & 1).astype(np.float64)


def bits_to_category(bits: np.ndarray, cardinality: int) -> np.ndarray:
    """Round bits to {0,1}, decode big-endian, clamp into [0, C-1]."""
    b = np.floor(np.asarray(bits, dtype=np.float64) + 0.5).clip(0, 1).astype(np.int64)
    width = b.shape[-1]
    weights = 1 << np.arange(width - 1, -1, -1)
    code = (b * weights).sum(axis=-1)
    return np.clip(code, 0, cardinality - 1)


def standardize(dataset: EncodedDataset, mask_binary: np.ndarray) -> EncodedDataset:
    """Fit per-numeric-element stats on observed entries and apply them.

    Stats are population mean/std of the observed training entries only; bit
    elements keep identity stats.  Zero-variance columns get the std floor.
    """
    if mask_binary.shape != dataset.values.shape:
        raise ValueError("mask shape does not match dataset")
    L = dataset.schema.width
    mean = np.zeros(L)
    std = np.ones(L)
    for j in dataset.schema.numeric_element_indices():
        obs = dataset.values[mask_binary[:, j].astype(bool), j]
        if obs.size == 0:
            name = dataset.schema.specs[int(dataset.schema.element_owner()[j])].name
            raise ValueError(f"numeric column {name!r} has zero observed entries")
        mean[j] = obs.mean()
        std[j] = max(float(obs.std()), STD_FLOOR)
    stats = Standardization(mean, std)
    return EncodedDataset(stats.apply(dataset.values), dataset.schema, stats, dataset.split_tag)


def apply_standardization(dataset: EncodedDataset, stats: Standardization) -> EncodedDataset:
    return EncodedDataset(stats.apply(dataset.values), dataset.schema, stats, dataset.split_tag)


def decode_row(encoded_row: np.ndarray, schema: FeatureSchema, stats: Standardization | None = None) -> list:
    """Map one encoded row back to raw feature values (floats and labels)."""
    row = np.asarray(encoded_row, dtype=np.float64)
    if row.shape != (schema.width,):
        raise ValueError(f"expected row of length {schema.width}, got {row.shape}")
    if stats is not None:
        row = stats.invert(row)
    out = []
    for i, spec in enumerate(schema.specs):
        sl = schema.feature_slice(i)
        if spec.kind == "numeric":
            out.append(float(row[sl.start]))
        else:
            code = int(bits_to_category(row[sl], spec.cardinality))
            out.append(spec.categories[code] if spec.categories else code)
    return out


def decode_categorical_matrix(values: np.ndarray, schema: FeatureSchema, feature: int) -> np.ndarray:
    """Category codes for one categorical feature over a value matrix."""
    spec = schema.specs[feature]
    return bits_to_category(values[:, schema.feature_slice(feature)], spec.cardinality)


def split_rows(n_rows: int, seed: int, train_fraction: float = 0.7) -> tuple[np.ndarray, np.ndarray]:
    perm = streams.stream(seed, streams.SPLIT).permutation(n_rows)
    cut = int(round(n_rows * train_fraction))
    return np.sort(perm[:cut]), np.sort(perm[cut:])


# ---------------------------------------------------------------------------
# on-disk formats


def save_schema(schema: FeatureSchema, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_schema(path: str) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return FeatureSchema.from_dict(json.load(fh))


def write_encoded_csv(dataset: EncodedDataset, path: str) -> None:
    names = dataset.schema.element_names()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in dataset.values:
            writer.writerow([format(v, ".17g") for v in row])


def read_encoded_csv(path: str, schema: FeatureSchema, split_tag: str = "train") -> EncodedDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != schema.element_names():
            raise SchemaError(f"{path}: element names do not match schema")
        values = np.array([[float(c) for c in row] for row in reader], dtype=np.float64)
    return EncodedDataset(values, schema, split_tag=split_tag)


def write_decoded_csv(values: np.ndarray, schema: FeatureSchema, stats: Standardization | None, path: str) -> None:
    """Write rows in raw feature space (numeric floats, category labels)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([s.name for s in schema.specs])
        for row in values:
            writer.writerow(decode_row(row, schema, stats))


def prep_dataset(
    csv_path: str,
    target_name: str,
    out_dir: str,
    seed: int = 0,
    train_fraction: float = 0.7,
) -> dict:
    """Split a raw table, encode both splits, and write them with a sidecar."""
    table = load_table(csv_path)
    schema, encoded = infer_and_encode_schema(table, target_name)
    train_idx, test_idx = split_rows(table.n_rows, seed, train_fraction)
    os.makedirs(out_dir, exist_ok=True)
    train = EncodedDataset(encoded.values[train_idx], schema, split_tag="train")
    test = EncodedDataset(encoded.values[test_idx], schema, split_tag="test")
    save_schema(schema, os.path.join(out_dir, "schema.json"))
    write_encoded_csv(train, os.path.join(out_dir, "train.csv"))
    write_encoded_csv(test, os.path.join(out_dir, "test.csv"))
    return {
        "schema_hash": schema.hash(),
        "width": schema.width,
        "n_train": int(train_idx.size),
        "n_test": int(test_idx.size),
    }


def load_prepped(
    prep_dir: str, schema_path: str | None = None
) -> tuple[FeatureSchema, EncodedDataset, EncodedDataset]:
    schema = load_schema(schema_path or os.path.join(prep_dir, "schema.json"))
    train = read_encoded_csv(os.path.join(prep_dir, "train.csv"), schema, "train")
    test = read_encoded_csv(os.path.join(prep_dir, "test.csv"), schema, "test")
    return schema, train, test
