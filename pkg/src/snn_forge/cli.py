"""Command-line front end: ``snn-forge prepare | train | experiment | report``.

Progress goes to stderr; every artifact is written to files.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, dataio
from .dataio import DataError
from .harness import SpecError, ExperimentSpec, rerender, run_experiment, write_outcome, write_trace
from .metrics import CSV_FIELDS
from .network import save_model
from .pdbp import DivergedError, PdbpConfig, train_pdbp
from .vpso import VpsoConfig, optimize_vpso

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4
EXIT_PARTIAL = 5

SEED_ENV = "SNN_FORGE_SEED"


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def run_manifest(argv, config: dict, dataset_checksum=None, started=None) -> dict:
    return {
        "command_line": ["snn-forge", *argv],
        "config": config,
        "seed_scheme": "run seed = base seed + run index",
        "dataset_checksum": dataset_checksum,
        "versions": {
            "snn_forge": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "started": started,
        "finished": _now(),
    }


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _load_dataset(path: Path, manifest: Path | None) -> dataio.Dataset:
    """A JSON argument is a dataset manifest (raw table, prepared on the fly);
    anything else is a prepared snapshot CSV."""
    if path.suffix == ".json":
        return dataio.prepare(dataio.load_manifest(path))
    if manifest is not None:
        return dataio.prepare(dataio.load_manifest(manifest, csv_path=path))
    return dataio.read_snapshot(path)


def cmd_prepare(args, argv) -> int:
    started = _now()
    raw = dataio.load_manifest(args.manifest, csv_path=args.dataset_csv)
    data = dataio.prepare(raw)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_snapshot(data, out / "snapshot.csv")
    dataio.write_imputation_log(data, out / "imputation_log.csv")
    (out / "normalization.json").write_text(json.dumps(
        {"features": list(data.feature_names), "bounds": [list(b) for b in data.normalization]}, indent=2))
    man = run_manifest(argv, {"manifest": str(args.manifest), "dataset_csv": str(args.dataset_csv)},
                       data.checksum(), started)
    (out / "manifest.json").write_text(json.dumps(man, indent=2))
    _log(f"prepared {data.name}: {data.N} rows, {data.n} features, "
         f"{len(data.imputation_log)} imputed cells -> {out}")
    return EXIT_OK


def _algo_config(args):
    seed = default_seed() if args.seed is None else args.seed
    common = {"driver": args.driver, "seed": seed}
    for key in ("max_iterations", "tolerance", "threshold"):
        if getattr(args, key) is not None:
            common[key] = getattr(args, key)
    if args.algo == "pdbp":
        for key in ("learning_rate", "init_range"):
            if getattr(args, key) is not None:
                common[key] = getattr(args, key)
        return PdbpConfig(**common)
    for key in ("population", "reorder_period", "c1", "c2", "w_max", "w_min", "eps_mass", "mode"):
        if getattr(args, key) is not None:
            common[key] = getattr(args, key)
    return VpsoConfig(**common)


def cmd_train(args, argv) -> int:
    started = _now()
    if args.hidden < 1:
        raise ValueError(f"--hidden must be >= 1, got {args.hidden}")
    config = _algo_config(args)
    data = _load_dataset(Path(args.dataset), args.manifest)
    log = _log if args.verbose else None
    if args.algo == "pdbp":
        result = train_pdbp(data, args.hidden, config, log=log)
    else:
        result = optimize_vpso(data, args.hidden, config, log=log)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(result.model, out / "model.json")
    write_trace(result, out / "trace.csv")
    with (out / "report.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(CSV_FIELDS) + ["best_iteration", "iterations_run", "train_time_ms"])
        row = result.final_report.to_row()
        w.writerow([row[k] for k in CSV_FIELDS] + [result.best_iteration, result.iterations_run,
                                                    round(result.train_time_ms, 3)])
    (out / "run.json").write_text(json.dumps(result.metadata(), indent=2))
    man = run_manifest(argv, result.config | {"algorithm": args.algo.upper(), "hidden": args.hidden},
                       data.checksum(), started)
    (out / "manifest.json").write_text(json.dumps(man, indent=2))
    r = result.final_report
    _log(f"{config.driver}-{args.algo.upper()} m={args.hidden}: ACC={r.acc:.4f} F1={r.f1:.4f} "
         f"I={result.best_iteration} T={result.train_time_ms:.0f}ms -> {out}")
    return EXIT_OK


def cmd_experiment(args, argv) -> int:
    started = _now()
    spec = ExperimentSpec.load(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    _log(f"running {spec.protocol} '{spec.name}' ({', '.join(spec.algorithms)}, driver {spec.driver})")
    outcome = run_experiment(spec, n_jobs=args.jobs)
    out = write_outcome(outcome, args.out)
    checksums = {}
    for ref in spec.datasets:
        checksums[str(ref)] = dataio.load_manifest(spec.resolve(ref)).checksum()
    man = run_manifest(argv, spec.to_dict(), checksums, started)
    man["failed_runs"] = [i for i, _, _ in outcome.failures]
    (out / "manifest.json").write_text(json.dumps(man, indent=2))
    if outcome.failures:
        for i, label, msg in outcome.failures:
            _log(f"run {i} ({label}) failed: {msg}")
        return EXIT_PARTIAL
    _log(f"{len(outcome.records)} runs -> {out}")
    return EXIT_OK


def cmd_report(args, argv) -> int:
    groups = rerender(args.experiment_dir)
    _log(f"re-rendered {len(groups)} groups in {args.experiment_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snn-forge", description="Train shallow sigmoid networks "
                                     "with KPI-driven backpropagation or a variant particle swarm.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="load, impute and normalise a raw CSV")
    p.add_argument("dataset_csv", type=Path)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="one training run")
    p.add_argument("dataset", type=Path, help="prepared snapshot CSV or dataset manifest JSON")
    p.add_argument("--manifest", type=Path, help="manifest for a raw CSV given as DATASET")
    p.add_argument("--algo", choices=["pdbp", "vpso"], required=True)
    p.add_argument("--driver", type=str.upper, choices=["ERR", "ACC", "F1"], default="ACC")
    p.add_argument("--hidden", type=int, required=True)
    p.add_argument("--seed", type=int, help=f"defaults to ${SEED_ENV} or 0")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--tolerance", type=int, help="stall tolerance (default 20d)")
    p.add_argument("--threshold", type=float)
    p.add_argument("--learning-rate", type=float, help="PDBP step size (default 0.05)")
    p.add_argument("--init-range", type=float, help="PDBP initial weight half-width (default 0.5)")
    p.add_argument("--population", type=int, help="VPSO swarm size (default 2d)")
    p.add_argument("--reorder-period", type=int, help="VPSO ring reshuffle period (default 10d)")
    p.add_argument("--c1", type=float)
    p.add_argument("--c2", type=float)
    p.add_argument("--w-max", type=float)
    p.add_argument("--w-min", type=float)
    p.add_argument("--eps-mass", type=float)
    p.add_argument("--mode", choices=["vpso", "standard"])
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("experiment", help="run an experiment spec")
    p.add_argument("spec", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, help="override the spec's base seed")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="re-render report.csv and table.md from runs/*.json")
    p.add_argument("experiment_dir", type=Path)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, argv)
    except SpecError as exc:
        _log(str(exc))
        return EXIT_USAGE
    except DataError as exc:
        _log(f"data error: {exc}")
        return EXIT_DATA
    except DivergedError as exc:
        _log(f"training diverged: {exc}")
        return EXIT_DIVERGED
    except (ValueError, FileNotFoundError) as exc:
        _log(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
