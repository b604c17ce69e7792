import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moarm import data


def make_table(names, kinds, columns):
    return data.RawTable(list(names), list(kinds), [list(c) for c in columns])


def synthetic_table(n_numeric, cat_cards, target_kind, target_card=0, n_rows=12, seed=0):
    """A toy table whose schema mirrors a (num, cats, target) signature."""
    rng = np.random.default_rng(seed)
    names, kinds, cols = [], [], []
    for i in range(n_numeric):
        names.append(f"num{i}")
        kinds.append("numeric")
        cols.append(rng.normal(size=n_rows).tolist())
    for i, card in enumerate(cat_cards):
        names.append(f"cat{i}")
        kinds.append("categorical")
        vals = [f"v{k}" for k in rng.integers(0, card, size=n_rows)]
        vals[:card] = [f"v{k}" for k in range(card)]  # every category appears
        cols.append(vals)
    names.append("target")
    if target_kind == "numeric":
        kinds.append("numeric")
        cols.append(rng.normal(size=n_rows).tolist())
    else:
        kinds.append("categorical")
        vals = [f"t{k}" for k in rng.integers(0, target_card, size=n_rows)]
        vals[:target_card] = [f"t{k}" for k in range(target_card)]
        cols.append(vals)
    return make_table(names, kinds, cols)


def test_magic_layout_l11():
    table = synthetic_table(10, [], "numeric", n_rows=16)
    schema, encoded = data.infer_and_encode_schema(table, "target")
    assert schema.width == 11
    assert encoded.values.shape == (16, 11)
    # numeric target sits at the end of the numeric block
    assert schema.specs[10].is_target and schema.specs[10].kind == "numeric"


def test_categorical_bits_big_endian():
    assert data.category_bits(np.array([2]), 2).tolist() == [[1.0, 0.0]]
    assert data.category_bits(np.array([0, 1, 2, 3]), 2).tolist() == [
        [0, 0],
        [0, 1],
        [1, 0],
        [1, 1],
    ]


def test_adult_layout_l35():
    # UCI Adult signature: 6 numeric + 8 categoricals + binary target
    cards = [9, 16, 7, 15, 6, 5, 2, 42]
    table = synthetic_table(6, cards, "categorical", 2, n_rows=64)
    schema, _ = data.infer_and_encode_schema(table, "target")
    assert schema.width == 35
    # categorical target block occupies the final positions
    assert schema.specs[-1].is_target


@pytest.mark.parametrize(
    "name,n_num,cards,t_kind,t_card,expected",
    [
        ("adult", 6, [9, 16, 7, 15, 6, 5, 2, 42], "categorical", 2, 35),
        ("bean", 16, [], "categorical", 7, 19),
        ("california", 9, [], "categorical", 5, 12),
        ("default", 14, [2, 2, 2, 7, 11, 11, 11, 11, 11, 11], "categorical", 2, 45),
        ("gesture", 31, [], "numeric", 0, 32),
        ("letter", 16, [], "categorical", 26, 21),
        ("magic", 10, [], "numeric", 0, 11),
    ],
)
def test_uci_encoded_dims(name, n_num, cards, t_kind, t_card, expected):
    table = synthetic_table(n_num, cards, t_kind, t_card, n_rows=max(64, t_card + 1))
    schema, _ = data.infer_and_encode_schema(table, "target")
    assert schema.width == expected, name


def test_unknown_target_rejected():
    table = synthetic_table(2, [], "numeric")
    with pytest.raises(data.SchemaError):
        data.infer_schema(table, "nope")


def test_single_category_rejected():
    table = make_table(["a", "t"], ["categorical", "numeric"], [["x", "x", "x"], [1.0, 2.0, 3.0]])
    with pytest.raises(data.SchemaError):
        data.infer_schema(table, "t")


def test_nonfinite_numeric_rejected():
    table = make_table(["a", "t"], ["numeric", "numeric"], [[1.0, math.nan], [1.0, 2.0]])
    schema = data.infer_schema(table, "t")
    with pytest.raises(ValueError):
        data.encode_table(table, schema)


def test_standardize_observed_only():
    table = make_table(["a", "t"], ["numeric", "numeric"], [[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    schema, encoded = data.infer_and_encode_schema(table, "t")
    mask = np.ones((3, 2), dtype=np.uint8)
    out = data.standardize(encoded, mask)
    np.testing.assert_allclose(out.standardization.mean[0], 2.0)
    np.testing.assert_allclose(out.standardization.std[0], 0.8165, atol=1e-4)
    np.testing.assert_allclose(out.values[:, 0], [-1.2247, 0.0, 1.2247], atol=1e-4)


def test_standardize_identity_column():
    vals = np.array([-1.224744871391589, 0.0, 1.224744871391589])
    table = make_table(["a", "t"], ["numeric", "numeric"], [vals.tolist(), [0.0, 0.0, 0.0]])
    _, encoded = data.infer_and_encode_schema(table, "t")
    out = data.standardize(encoded, np.ones((3, 2), dtype=np.uint8))
    np.testing.assert_allclose(out.values[:, 0], vals, atol=1e-12)


def test_standardize_constant_column_floors_std():
    table = make_table(["a", "t"], ["numeric", "numeric"], [[5.0, 5.0, 5.0], [1.0, 2.0, 3.0]])
    _, encoded = data.infer_and_encode_schema(table, "t")
    out = data.standardize(encoded, np.ones((3, 2), dtype=np.uint8))
    np.testing.assert_allclose(out.values[:, 0], [0.0, 0.0, 0.0])
    assert out.standardization.std[0] == data.STD_FLOOR


def test_standardize_ignores_masked_entries():
    table = make_table(["a", "t"], ["numeric", "numeric"], [[1.0, 2.0, 100.0], [0.0, 0.0, 0.0]])
    _, encoded = data.infer_and_encode_schema(table, "t")
    mask = np.array([[1, 1], [1, 1], [0, 1]], dtype=np.uint8)
    out = data.standardize(encoded, mask)
    assert out.standardization.mean[0] == 1.5  # the 100.0 entry is unobserved


def test_standardize_rejects_fully_missing_column():
    table = make_table(["a", "t"], ["numeric", "numeric"], [[1.0, 2.0], [0.0, 0.0]])
    _, encoded = data.infer_and_encode_schema(table, "t")
    mask = np.array([[0, 1], [0, 1]], dtype=np.uint8)
    with pytest.raises(ValueError):
        data.standardize(encoded, mask)


def test_decode_rounding_and_clamp():
    assert data.bits_to_category(np.array([0.9, 0.1]), 4) == 2
    assert data.bits_to_category(np.array([1.0, 1.0]), 3) == 2  # code 3 clamped to C-1
    stats = data.Standardization(np.array([2.0]), np.array([0.8165]))
    spec = data.FeatureSpec("a", "numeric", is_target=True)
    schema = data.FeatureSchema((spec,))
    (value,) = data.decode_row(np.array([1.2247]), schema, stats)
    assert value == pytest.approx(3.0, abs=1e-3)


def test_load_table_typed(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("x,y,z\n1.5,a,0\n2.0,b,1\n2.5,a,0\n")
    table = data.load_table(str(p))
    assert table.n_rows == 3
    assert table.kinds == ["numeric", "categorical", "numeric"]
    assert table.columns[1] == ["a", "b", "a"]


def test_load_table_rejects_ragged(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,y\n1,2\n3\n")
    with pytest.raises(ValueError, match="ragged"):
        data.load_table(str(p))


def test_load_table_rejects_empty(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(ValueError):
        data.load_table(str(p))


@settings(deadline=None, max_examples=50)
@given(
    codes=st.lists(st.integers(0, 6), min_size=7, max_size=24),
    numerics=st.lists(st.floats(-1e6, 1e6), min_size=7, max_size=24),
)
def test_encode_decode_identity(codes, numerics):
    n = min(len(codes), len(numerics))
    table = make_table(
        ["num", "cat", "t"],
        ["numeric", "categorical", "numeric"],
        [numerics[:n], [f"c{min(k, 6)}" for k in codes[:n]] , list(range(n))],
    )
    # guarantee all 7 categories appear so the schema is stable
    table.columns[1][:7] = [f"c{k}" for k in range(7)]
    schema, encoded = data.infer_and_encode_schema(table, "t")
    std = data.standardize(encoded, np.ones_like(encoded.values, dtype=np.uint8))
    for r in range(table.n_rows):
        decoded = data.decode_row(std.values[r], schema, std.standardization)
        by_name = dict(zip([s.name for s in schema.specs], decoded))
        assert by_name["cat"] == table.columns[1][r]
        assert by_name["num"] == pytest.approx(table.columns[0][r], rel=1e-9, abs=1e-9)


def test_observed_stats_near_zero_one():
    rng = np.random.default_rng(5)
    table = synthetic_table(3, [4], "numeric", n_rows=200, seed=5)
    schema, encoded = data.infer_and_encode_schema(table, "target")
    mask_feats = (rng.random((200, schema.n_features)) > 0.3).astype(np.uint8)
    from moarm.masks import expand_feature_mask

    mask = expand_feature_mask(mask_feats, schema)
    out = data.standardize(encoded, mask)
    for j in schema.numeric_element_indices():
        obs = out.values[mask[:, j].astype(bool), j]
        assert abs(obs.mean()) < 1e-9
        assert abs(obs.std() - 1.0) < 1e-9


def test_schema_sidecar_roundtrip(tmp_path):
    table = synthetic_table(2, [3, 5], "categorical", 4, n_rows=32)
    schema, _ = data.infer_and_encode_schema(table, "target")
    path = tmp_path / "schema.json"
    data.save_schema(schema, str(path))
    loaded = data.load_schema(str(path))
    assert loaded == schema
    assert loaded.hash() == schema.hash()


def test_prep_roundtrip(tmp_path):
    table = synthetic_table(3, [3], "numeric", n_rows=40, seed=9)
    csv_path = tmp_path / "raw.csv"
    with open(csv_path, "w") as fh:
        fh.write(",".join(table.names) + "\n")
        for r in range(table.n_rows):
            fh.write(",".join(str(c[r]) for c in table.columns) + "\n")
    info = data.prep_dataset(str(csv_path), "target", str(tmp_path / "prep"), seed=1)
    assert info["n_train"] + info["n_test"] == 40
    schema, train, test = data.load_prepped(str(tmp_path / "prep"))
    assert train.values.shape[1] == schema.width == info["width"]
    assert train.n_rows == info["n_train"]
