"""Command-line entry point.

Subcommands mirror the experimental workflow: ``prep`` encodes a raw table,
``mask`` synthesizes a missingness suite, ``train`` fits a model, ``impute``
fills held-out rows, ``acquire`` runs greedy feature acquisition, ``bench``
executes the full protocol grid, and ``serve`` starts the acquisition
service.  Flag values take precedence over a ``--config`` JSON file, which
takes precedence over built-in defaults; every run writes its resolved
configuration next to its outputs so artifacts are reproducible byte for byte
from (config, seed).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .acquisition import BinningSpec, saia_run, write_trace
from .bench import BenchConfig, run_benchmark
from .checkpoint import load_checkpoint, save_checkpoint, write_container
from .data import apply_standardization, load_prepped, prep_dataset, standardize, write_decoded_csv
from .evaluate import compute_metrics
from .masks import load_suite, make_suite, save_suite
from .model import TrainConfig, fit, write_metrics_log
from .sampling import impute_batch, point_estimate_matrix
from .service import AcquisitionService, serve


class ConfigError(ValueError):
    pass


_DEFAULTS: dict[str, dict] = {
    "prep": {"data": None, "target": None, "out": None, "seed": 0},
    "mask": {"data": None, "schema": None, "mechanism": "mcar", "rate": 0.3, "seed": 0, "out": None},
    "train": {
        "data": None,
        "schema": None,
        "masks": None,
        "out": None,
        "mechanism": None,
        "epochs": 500,
        "batch": 256,
        "lr": 4e-4,
        "widths": "512,1024,512",
        "k_train": 10,
        "steps": None,
        "seed": 0,
    },
    "impute": {
        "data": None,
        "schema": None,
        "masks": None,
        "checkpoint": None,
        "out": None,
        "k_test": 100,
        "steps": None,
        "seed": 0,
    },
    "acquire": {
        "data": None,
        "schema": None,
        "checkpoint": None,
        "out": None,
        "rows": 10,
        "budget": 3,
        "k_test": 100,
        "bins": 5,
        "seed": 0,
    },
    "bench": {
        "data": None,
        "out": "runs",
        "epochs": 200,
        "batch": 256,
        "widths": "64,128,64",
        "k_train": 10,
        "k_test": 100,
        "steps": None,
        "seeds": 5,
        "rows": None,
        "dry_run": False,
    },
    "serve": {
        "checkpoint": None,
        "port": 8000,
        "host": "127.0.0.1",
        "k_test": 100,
        "bins": 5,
        "static": None,
        "snapshot": None,
    },
}


def parse_config(argv: list[str]) -> tuple[str, dict]:
    """Resolve (command, config) with precedence flag > config file > default."""
    parser = argparse.ArgumentParser(prog="moarm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(p, name, **kw):
        p.add_argument(name, default=None, **kw)

    for command in _DEFAULTS:
        p = sub.add_parser(command)
        add(p, "--config", help="JSON file with defaults for this command")
        keys = _DEFAULTS[command]
        if "data" in keys:
            add(p, "--data", help="input path (raw CSV for prep, prepped dir otherwise)")
        if command == "prep":
            add(p, "--target", help="target column name")
        if "schema" in keys:
            add(p, "--schema", help="schema sidecar path (default: <data>/schema.json)")
        if command in ("mask", "train"):
            add(p, "--mechanism", choices=["mcar", "mnar"])
        if command == "mask":
            add(p, "--rate", type=float)
        if command in ("train", "impute"):
            add(p, "--masks", help="mask suite directory")
        if command in ("impute", "acquire", "serve"):
            add(p, "--checkpoint")
        if command in ("train", "bench"):
            add(p, "--epochs", type=int)
            add(p, "--batch", type=int)
            add(p, "--widths")
            add(p, "--k-train", dest="k_train", type=int)
        if command == "train":
            add(p, "--lr", type=float)
        if command in ("impute", "acquire", "bench", "serve"):
            add(p, "--k-test", dest="k_test", type=int)
        if command in ("train", "impute", "bench"):
            add(p, "--steps", type=int, help="blocked-unmasking schedule length S")
        if command in ("acquire", "serve"):
            add(p, "--bins", type=int)
        if command == "acquire":
            add(p, "--rows", type=int)
            add(p, "--budget", type=int)
        if command == "bench":
            add(p, "--seeds", type=int)
            add(p, "--rows", type=int, help="cap on evaluated test rows per cell")
            p.add_argument("--dry-run", dest="dry_run", action="store_true", default=None)
        if command == "serve":
            add(p, "--port", type=int)
            add(p, "--host")
            add(p, "--static", help="directory of console assets to serve")
            add(p, "--snapshot", help="directory for session snapshots")
        if "seed" in keys:
            add(p, "--seed", type=int)
        if "out" in keys:
            add(p, "--out")

    ns = parser.parse_args(argv)
    command = ns.command
    resolved = dict(_DEFAULTS[command])
    if ns.config:
        with open(ns.config, encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = sorted(set(file_cfg) - set(resolved))
        if unknown:
            raise ConfigError(f"unknown config keys for {command!r}: {', '.join(unknown)}")
        resolved.update(file_cfg)
    for key in resolved:
        flag_val = getattr(ns, key, None)
        if flag_val is not None:
            resolved[key] = flag_val
    _validate(command, resolved)
    return command, resolved


def _validate(command: str, cfg: dict) -> None:
    if command == "mask" and not 0.0 <= float(cfg["rate"]) < 1.0:
        raise ConfigError(f"--rate must be in [0, 1), got {cfg['rate']}")
    required = {
        "prep": ("data", "target", "out"),
        "mask": ("data", "out"),
        "train": ("data", "masks", "out"),
        "impute": ("data", "masks", "checkpoint", "out"),
        "acquire": ("data", "checkpoint", "out"),
        "bench": ("data",),
        "serve": ("checkpoint",),
    }[command]
    missing = [k for k in required if not cfg.get(k)]
    if missing:
        raise ConfigError(f"{command}: missing required option(s): {', '.join('--' + m for m in missing)}")


def _parse_widths(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in str(text).split(",") if tok.strip())


def _write_resolved(cfg: dict, command: str, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "resolved_config.json"), "w", encoding="utf-8") as fh:
        json.dump({"command": command, **cfg}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def dispatch(command: str, cfg: dict) -> int:
    if command == "prep":
        info = prep_dataset(cfg["data"], cfg["target"], cfg["out"], cfg["seed"])
        _write_resolved(cfg, command, cfg["out"])
        print(json.dumps(info))
        return 0

    if command == "mask":
        schema, train, test = load_prepped(cfg["data"], cfg["schema"])
        suite = make_suite(cfg["mechanism"], float(cfg["rate"]), cfg["seed"], schema, train, test)
        save_suite(suite, cfg["out"])
        _write_resolved(cfg, command, cfg["out"])
        print(f"wrote {suite.mechanism} masks (rate={suite.rate}) to {cfg['out']}")
        return 0

    if command == "train":
        schema, train_raw, _ = load_prepped(cfg["data"], cfg["schema"])
        suite = load_suite(cfg["masks"])
        if suite.train.shape != train_raw.values.shape:
            print("error: mask suite does not match the training split shape", file=sys.stderr)
            return 2
        mode = cfg["mechanism"] or suite.mechanism
        train_std = standardize(train_raw, suite.train)
        tcfg = TrainConfig(
            epochs=cfg["epochs"],
            batch_size=cfg["batch"],
            lr=cfg["lr"],
            mode=mode,
            k_train=cfg["k_train"],
            sample_steps=cfg["steps"],
            hidden=_parse_widths(cfg["widths"]),
            seed=cfg["seed"],
        )
        bundle, history = fit(train_std.values, suite.train, schema, train_std.standardization, tcfg)
        os.makedirs(cfg["out"], exist_ok=True)
        save_checkpoint(bundle, os.path.join(cfg["out"], "checkpoint.bin"))
        write_metrics_log(history, os.path.join(cfg["out"], "train_log.txt"))
        _write_resolved(cfg, command, cfg["out"])
        print(f"trained {mode} model for {cfg['epochs']} epochs -> {cfg['out']}/checkpoint.bin")
        return 0

    if command == "impute":
        schema, _, test_raw = load_prepped(cfg["data"], cfg["schema"])
        bundle = load_checkpoint(cfg["checkpoint"])
        if bundle.schema_hash != schema.hash():
            print(
                f"error: checkpoint schema {bundle.schema_hash} does not match data schema {schema.hash()}",
                file=sys.stderr,
            )
            return 2
        suite = load_suite(cfg["masks"])
        if suite.test is None or suite.test.shape != test_raw.values.shape:
            print("error: mask suite has no test masks matching the test split", file=sys.stderr)
            return 2
        test_std = apply_standardization(test_raw, bundle.standardization)
        results = impute_batch(
            test_std.values,
            suite.test,
            cfg["k_test"],
            bundle,
            mode=bundle.meta.get("mode", "mcar"),
            n_steps=cfg["steps"],
            seed=cfg["seed"],
        )
        imputed = point_estimate_matrix(results)
        os.makedirs(cfg["out"], exist_ok=True)
        write_decoded_csv(imputed, schema, bundle.standardization, os.path.join(cfg["out"], "imputed.csv"))
        write_container(
            os.path.join(cfg["out"], "imputation_sidecar.bin"),
            {"kind": "imputation", "schema_hash": schema.hash(), "k": cfg["k_test"], "seed": cfg["seed"]},
            {
                "posterior_std": np.stack([r.posterior_std for r in results]),
                "samples": np.stack([r.samples for r in results]),
                "weights": np.stack([r.weights for r in results]),
            },
        )
        report = compute_metrics(test_std.values, imputed, suite.test, schema, {"command": "impute"})
        with open(os.path.join(cfg["out"], "report.json"), "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        _write_resolved(cfg, command, cfg["out"])
        print(json.dumps({"rmse": report.rmse, "mae": report.mae, "accuracy": report.accuracy}))
        return 0

    if command == "acquire":
        schema, _, test_raw = load_prepped(cfg["data"], cfg["schema"])
        bundle = load_checkpoint(cfg["checkpoint"])
        if bundle.schema_hash != schema.hash():
            print("error: checkpoint schema does not match data schema", file=sys.stderr)
            return 2
        test_std = apply_standardization(test_raw, bundle.standardization)
        os.makedirs(cfg["out"], exist_ok=True)
        spec = BinningSpec(cfg["bins"])
        summary = []
        for row in range(min(cfg["rows"], test_std.n_rows)):
            trace = saia_run(
                test_std.values[row],
                cfg["budget"],
                bundle,
                cfg["k_test"],
                spec,
                seed=cfg["seed"],
                row_id=row,
            )
            write_trace(trace, os.path.join(cfg["out"], f"trace_{row:04d}.txt"))
            summary.append(
                {
                    "row": row,
                    "acquired": [s.feature_name for s in trace.steps],
                    "errors_std": [trace.prior_error_std] + [s.error_std for s in trace.steps],
                }
            )
        with open(os.path.join(cfg["out"], "acquire_summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        _write_resolved(cfg, command, cfg["out"])
        print(f"wrote {len(summary)} traces to {cfg['out']}")
        return 0

    if command == "bench":
        datasets = {}
        for item in str(cfg["data"]).split(";"):
            if not item.strip():
                continue
            if "=" in item:
                name, path = item.split("=", 1)
            else:
                name, path = os.path.basename(item.rstrip("/")), item
            datasets[name.strip()] = path.strip()
        bcfg = BenchConfig(
            datasets=datasets,
            n_seeds=cfg["seeds"],
            k_test=cfg["k_test"],
            sample_steps=cfg["steps"],
            train=TrainConfig(
                epochs=cfg["epochs"],
                batch_size=cfg["batch"],
                hidden=_parse_widths(cfg["widths"]),
                k_train=cfg["k_train"],
            ),
            out_dir=cfg["out"],
            max_test_rows=cfg["rows"],
        )
        outcomes = run_benchmark(bcfg, dry_run=bool(cfg["dry_run"]))
        if cfg["dry_run"]:
            for oc in outcomes:
                c = oc["cell"]
                print(f"planned: {c['dataset']} {c['mechanism']} rate={c['rate']} seed={c['seed']}")
            print(f"{len(outcomes)} cells planned, nothing run")
            return 0
        _write_resolved(cfg, command, cfg["out"])
        failed = [oc for oc in outcomes if oc["status"] != "ok"]
        for oc in failed:
            print(f"FAILED cell {oc['cell']}: {oc['error']}", file=sys.stderr)
        print(f"{len(outcomes) - len(failed)}/{len(outcomes)} cells ok -> {cfg['out']}/report.csv")
        return 1 if failed else 0

    if command == "serve":
        service = AcquisitionService(cfg["k_test"], cfg["bins"], cfg["snapshot"])
        info = service.load_model(cfg["checkpoint"])
        server = serve(service, cfg["port"], cfg["host"], cfg["static"])
        print(f"model {info['model_id']} loaded; listening on http://{cfg['host']}:{cfg['port']}")
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()
        return 0

    raise ConfigError(f"unknown command {command!r}")


def main(argv: list[str] | None = None) -> int:
    try:
        command, cfg = parse_config(sys.argv[1:] if argv is None else argv)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        return dispatch(command, cfg)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
