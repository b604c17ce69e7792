import json
import os

import numpy as np
import pytest

from moarm.cli import ConfigError, dispatch, main, parse_config


def write_raw_csv(path, n_rows=60, seed=0):
    rng = np.random.default_rng(seed)
    base = rng.normal(size=n_rows)
    with open(path, "w") as fh:
        fh.write("f0,f1,f2,label\n")
        for i in range(n_rows):
            cat = "hi" if base[i] > 0 else "lo"
            fh.write(f"{base[i]:.6f},{base[i] + rng.normal(scale=0.2):.6f},{rng.normal():.6f},{cat}\n")


def test_parse_defaults_and_flag_override(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"rate": 0.1, "seed": 5}))
    cmd, cfg = parse_config(
        ["mask", "--config", str(cfg_file), "--data", "d", "--out", "o", "--rate", "0.3"]
    )
    assert cmd == "mask"
    assert cfg["rate"] == 0.3  # flag beats file
    assert cfg["seed"] == 5  # file beats default
    assert cfg["mechanism"] == "mcar"  # default survives


def test_parse_rejects_unknown_config_keys(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"bogus_key": 1}))
    with pytest.raises(ConfigError, match="bogus_key"):
        parse_config(["mask", "--config", str(cfg_file), "--data", "d", "--out", "o"])


def test_parse_rejects_invalid_rate():
    with pytest.raises(ConfigError, match="rate"):
        parse_config(["mask", "--data", "d", "--out", "o", "--rate", "1.5"])


def test_parse_requires_mandatory_options():
    with pytest.raises(ConfigError, match="--target"):
        parse_config(["prep", "--data", "x.csv", "--out", "o"])


def test_pipeline_end_to_end(tmp_path, capsys):
    raw = tmp_path / "raw.csv"
    write_raw_csv(str(raw))
    prep_dir = str(tmp_path / "prep")
    mask_dir = str(tmp_path / "masks")
    model_dir = str(tmp_path / "model")
    imp_dir = str(tmp_path / "imputed")

    assert main(["prep", "--data", str(raw), "--target", "label", "--out", prep_dir]) == 0
    assert os.path.exists(os.path.join(prep_dir, "schema.json"))
    assert os.path.exists(os.path.join(prep_dir, "resolved_config.json"))

    assert main(["mask", "--data", prep_dir, "--mechanism", "mcar", "--rate", "0.3", "--seed", "1", "--out", mask_dir]) == 0
    assert os.path.exists(os.path.join(mask_dir, "masks_train.txt"))
    assert os.path.exists(os.path.join(mask_dir, "masks_test.txt"))

    assert main([
        "train", "--data", prep_dir, "--masks", mask_dir, "--out", model_dir,
        "--epochs", "3", "--batch", "16", "--widths", "8,8", "--seed", "1",
    ]) == 0
    ckpt = os.path.join(model_dir, "checkpoint.bin")
    assert os.path.exists(ckpt)
    assert os.path.exists(os.path.join(model_dir, "train_log.txt"))

    assert main([
        "impute", "--data", prep_dir, "--masks", mask_dir, "--checkpoint", ckpt,
        "--out", imp_dir, "--k-test", "4",
    ]) == 0
    assert os.path.exists(os.path.join(imp_dir, "imputed.csv"))
    from moarm.checkpoint import read_container

    meta, tensors = read_container(os.path.join(imp_dir, "imputation_sidecar.bin"))
    assert meta["kind"] == "imputation"
    n, k, width = tensors["samples"].shape
    assert k == 4  # K replicas per test row
    assert tensors["posterior_std"].shape == (n, width)
    report = json.load(open(os.path.join(imp_dir, "report.json")))
    assert report["rmse"] is not None

    acq_dir = str(tmp_path / "acq")
    assert main([
        "acquire", "--data", prep_dir, "--checkpoint", ckpt, "--out", acq_dir,
        "--rows", "2", "--budget", "2", "--k-test", "8",
    ]) == 0
    assert os.path.exists(os.path.join(acq_dir, "trace_0000.txt"))
    capsys.readouterr()


def test_impute_refuses_schema_mismatch(tmp_path, capsys):
    raw_a, raw_b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_raw_csv(str(raw_a), seed=1)
    with open(raw_b, "w") as fh:  # different schema: one extra column
        fh.write("f0,f1,f2,f3,label\n")
        rng = np.random.default_rng(2)
        for i in range(40):
            v = rng.normal(size=4)
            fh.write(",".join(f"{x:.4f}" for x in v) + (",hi\n" if i % 2 else ",lo\n"))

    prep_a, prep_b = str(tmp_path / "pa"), str(tmp_path / "pb")
    mask_a, mask_b = str(tmp_path / "ma"), str(tmp_path / "mb")
    model_a = str(tmp_path / "modela")
    main(["prep", "--data", str(raw_a), "--target", "label", "--out", prep_a])
    main(["prep", "--data", str(raw_b), "--target", "label", "--out", prep_b])
    main(["mask", "--data", prep_a, "--rate", "0.3", "--out", mask_a])
    main(["mask", "--data", prep_b, "--rate", "0.3", "--out", mask_b])
    main(["train", "--data", prep_a, "--masks", mask_a, "--out", model_a,
          "--epochs", "1", "--batch", "16", "--widths", "8"])
    code = main([
        "impute", "--data", prep_b, "--masks", mask_b,
        "--checkpoint", os.path.join(model_a, "checkpoint.bin"),
        "--out", str(tmp_path / "imp"),
    ])
    assert code == 2
    assert "schema" in capsys.readouterr().err


def test_bench_dry_run_plans_full_grid(tmp_path, capsys):
    raw = tmp_path / "raw.csv"
    write_raw_csv(str(raw))
    prep_dir = str(tmp_path / "prep")
    main(["prep", "--data", str(raw), "--target", "label", "--out", prep_dir])
    code = main(["bench", "--data", f"toy={prep_dir}", "--out", str(tmp_path / "runs"), "--dry-run"])
    assert code == 0
    out = capsys.readouterr().out
    lines = [ln for ln in out.splitlines() if ln.startswith("planned:")]
    # 1 dataset x 2 mechanisms x 3 rates x 5 seeds
    assert len(lines) == 30
    assert "nothing run" in out


def test_idempotent_rerun_reproduces_artifacts(tmp_path):
    raw = tmp_path / "raw.csv"
    write_raw_csv(str(raw))
    prep_dir = str(tmp_path / "prep")
    mask_dir = str(tmp_path / "masks")
    main(["prep", "--data", str(raw), "--target", "label", "--out", prep_dir])
    main(["mask", "--data", prep_dir, "--rate", "0.2", "--seed", "3", "--out", mask_dir])

    def train_once(out):
        main(["train", "--data", prep_dir, "--masks", mask_dir, "--out", out,
              "--epochs", "2", "--batch", "16", "--widths", "8", "--seed", "9"])
        return open(os.path.join(out, "checkpoint.bin"), "rb").read()

    assert train_once(str(tmp_path / "m1")) == train_once(str(tmp_path / "m2"))
