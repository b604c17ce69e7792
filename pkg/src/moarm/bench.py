"""Benchmark runner: datasets x mechanisms x train rates x mask seeds.

Each cell regenerates its mask suite (train at the cell's rate, test at the
fixed 50% protocol rate), standardizes from observed training entries, trains
a fresh model, imputes the held-out test rows with K conditional samples, and
scores the result next to column-mean and marginal-draw baselines.  Cells are
pure functions of (config, seed); outputs land in
``runs/<dataset>/<mechanism>/<rate>/<seed>/``.
"""

from __future__ import annotations

import csv
import json
import os
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import streams
from .checkpoint import save_checkpoint
from .data import EncodedDataset, apply_standardization, load_prepped, standardize
from .evaluate import compute_metrics, mean_imputation, prior_sample_imputation
from .masks import make_suite, save_suite
from .model import TrainConfig, fit, write_metrics_log
from .sampling import impute_batch, point_estimate_matrix

PROTOCOL_RATES = (0.1, 0.3, 0.5)
PROTOCOL_TEST_RATE = 0.5
PROTOCOL_SEEDS = 5


@dataclass
class BenchConfig:
    datasets: dict[str, str]  # name -> prepped directory
    mechanisms: tuple[str, ...] = ("mcar", "mnar")
    rates: tuple[float, ...] = PROTOCOL_RATES
    n_seeds: int = PROTOCOL_SEEDS
    k_test: int = 100
    test_rate: float = PROTOCOL_TEST_RATE
    sample_steps: int | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = "runs"
    workers: int = 1
    max_test_rows: int | None = None  # cap metric rows for desk-scale runs

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = asdict(self.train)
        return d


@dataclass(frozen=True)
class BenchCell:
    dataset: str
    mechanism: str
    rate: float
    seed: int

    @property
    def relpath(self) -> str:
        return os.path.join(self.dataset, self.mechanism, f"rate{int(round(self.rate * 100))}", f"seed{self.seed}")


def plan_grid(cfg: BenchConfig) -> list[BenchCell]:
    return [
        BenchCell(name, mech, rate, seed)
        for name in sorted(cfg.datasets)
        for mech in cfg.mechanisms
        for rate in cfg.rates
        for seed in range(cfg.n_seeds)
    ]


def run_cell(cfg: BenchConfig, cell: BenchCell) -> dict:
    schema, train_raw, test_raw = load_prepped(cfg.datasets[cell.dataset])
    if cfg.max_test_rows is not None and test_raw.n_rows > cfg.max_test_rows:
        test_raw = EncodedDataset(test_raw.values[: cfg.max_test_rows], schema, split_tag="test")
    suite = make_suite(cell.mechanism, cell.rate, cell.seed, schema, train_raw, test_raw, cfg.test_rate)

    train_std = standardize(train_raw, suite.train)
    stats = train_std.standardization
    test_std = apply_standardization(test_raw, stats)

    out_dir = os.path.join(cfg.out_dir, cell.relpath)
    os.makedirs(out_dir, exist_ok=True)
    save_suite(suite, out_dir)

    tcfg = TrainConfig(**{**asdict(cfg.train), "mode": cell.mechanism, "seed": cell.seed})
    bundle, history = fit(train_std.values, suite.train, schema, stats, tcfg)
    save_checkpoint(bundle, os.path.join(out_dir, "checkpoint.bin"))
    write_metrics_log(history, os.path.join(out_dir, "train_log.txt"))

    results = impute_batch(
        test_std.values,
        suite.test,
        cfg.k_test,
        bundle,
        mode=cell.mechanism,
        n_steps=cfg.sample_steps,
        seed=cell.seed,
    )
    imputed = point_estimate_matrix(results)
    tags = {"dataset": cell.dataset, "mechanism": cell.mechanism, "rate": cell.rate, "seed": cell.seed}
    report = compute_metrics(test_std.values, imputed, suite.test, schema, {**tags, "method": "moarm"})

    mean_fill = mean_imputation(train_std.values, suite.train, test_std.values, suite.test)
    mean_report = compute_metrics(test_std.values, mean_fill, suite.test, schema, {**tags, "method": "mean"})
    prior_fill = prior_sample_imputation(
        train_std.values, suite.train, test_std.values, suite.test, streams.stream(cell.seed, streams.SYNTH, 1)
    )
    prior_report = compute_metrics(test_std.values, prior_fill, suite.test, schema, {**tags, "method": "prior_sample"})

    rows = [r.to_dict() for r in (report, mean_report, prior_report)]
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump({"config": cfg.to_dict(), "cell": asdict(cell), "reports": rows}, fh, indent=2, sort_keys=True)
    return {"cell": asdict(cell), "reports": rows, "status": "ok"}


def run_benchmark(cfg: BenchConfig, dry_run: bool = False) -> list[dict]:
    grid = plan_grid(cfg)
    if dry_run:
        return [{"cell": asdict(c), "status": "planned"} for c in grid]
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)

    def _run(cell: BenchCell) -> dict:
        try:
            return run_cell(cfg, cell)
        except Exception as e:  # a failed cell is flagged, never dropped
            return {
                "cell": asdict(cell),
                "status": "failed",
                "error": f"{type(e).__name__}: {e}",
                "traceback": traceback.format_exc(),
            }

    workers = max(1, int(os.environ.get("MOARM_THREADS", cfg.workers)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run, grid))
    else:
        outcomes = [_run(cell) for cell in grid]

    write_report(outcomes, cfg.out_dir)
    return outcomes


def write_report(outcomes: list[dict], out_dir: str) -> None:
    """Per-cell rows as delimited text plus a mean +/- std summary."""
    rows = []
    for oc in outcomes:
        if oc["status"] != "ok":
            rows.append({**oc["cell"], "method": "-", "status": oc["status"], "rmse": "", "mae": "", "accuracy": ""})
            continue
        for rep in oc["reports"]:
            rows.append(
                {
                    **oc["cell"],
                    "method": rep["tags"]["method"],
                    "status": "ok",
                    "rmse": rep["rmse"] if rep["rmse"] is not None else "",
                    "mae": rep["mae"] if rep["mae"] is not None else "",
                    "accuracy": rep["accuracy"] if rep["accuracy"] is not None else "",
                }
            )
    fields = ["dataset", "mechanism", "rate", "seed", "method", "status", "rmse", "mae", "accuracy"]
    with open(os.path.join(out_dir, "report.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)

    summary: dict[tuple, dict[str, list[float]]] = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        key = (row["dataset"], row["mechanism"], row["rate"], row["method"])
        acc = summary.setdefault(key, {"rmse": [], "mae": [], "accuracy": []})
        for metric in ("rmse", "mae", "accuracy"):
            if row[metric] != "":
                acc[metric].append(float(row[metric]))
    digest = []
    for (dataset, mechanism, rate, method), metrics in sorted(summary.items()):
        entry = {"dataset": dataset, "mechanism": mechanism, "rate": rate, "method": method}
        for metric, vals in metrics.items():
            if vals:
                entry[metric] = {"mean": float(np.mean(vals)), "std": float(np.std(vals)), "n": len(vals)}
        digest.append(entry)
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(digest, fh, indent=2, sort_keys=True)
