"""Command-line interface.

Subcommands::

    generate   write a rescaled trajectory CSV plus its scaler sidecar
    run        one realization with optional model/timeseries/PSD exports
    sweep      topologies x spectral-radius grid x seeded realizations
    analyze    re-aggregate an existing records.csv

Exit codes: 0 on success, 2 on configuration errors, 1 on runtime errors.
Every subcommand accepts ``--config FILE`` pointing at a JSON object with
the same keys as the long flags (underscores for dashes); explicit flags
win over file values.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .harness import (
    MetricsRecord,
    RunConfig,
    aggregate,
    export,
    read_records_csv,
    run_realization_detailed,
    run_sweep,
    sweep_meta,
    write_meta_json,
    write_summary_csv,
)
from .lorenz import (
    LorenzParams,
    Trajectory,
    fit_scaler,
    generate_raw,
    random_initial_state,
    write_trajectory_csv,
)
from .metrics import psd, write_psd_csv
from .reservoir import TOPOLOGIES


class ConfigError(Exception):
    """Invalid command configuration (exit code 2)."""


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path!r} must hold a JSON object")
    return data


def _resolve(args: argparse.Namespace, file_config: dict, key: str, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in file_config:
        return file_config[key]
    return default


def _base_config(args: argparse.Namespace, file_config: dict, **overrides) -> RunConfig:
    kwargs = dict(
        n_nodes=int(_resolve(args, file_config, "nodes", 20)),
        input_scale=float(_resolve(args, file_config, "input_scale", 1.45)),
        ridge_lambda=float(_resolve(args, file_config, "ridge_lambda", 1e-6)),
        k_washout=int(_resolve(args, file_config, "washout", 10000)),
        k_train=int(_resolve(args, file_config, "train", 10000)),
        k_test=int(_resolve(args, file_config, "test", 5000)),
        horizon=int(_resolve(args, file_config, "horizon", 5000)),
        sync_steps=int(_resolve(args, file_config, "sync", 1000)),
        master_seed=int(_resolve(args, file_config, "seed", 0)),
    )
    kwargs.update(overrides)
    try:
        return RunConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_generate(args: argparse.Namespace) -> int:
    file_config = _load_config_file(args.config)
    n_samples = _resolve(args, file_config, "samples", None)
    out = _resolve(args, file_config, "out", None)
    if n_samples is None or out is None:
        raise ConfigError("generate requires --samples and --out")
    n_samples = int(n_samples)
    if n_samples < 1:
        raise ConfigError(f"--samples must be >= 1, got {n_samples}")
    seed = int(_resolve(args, file_config, "seed", 0))
    transient = float(_resolve(args, file_config, "transient", 100.0))

    params = LorenzParams()
    rng = np.random.default_rng(seed)
    raw = generate_raw(params, random_initial_state(rng), n_samples, transient)
    scaler = fit_scaler(raw)
    trajectory = Trajectory(params.dt_sample, scaler.transform(raw), scaler)
    sidecar = write_trajectory_csv(out, trajectory, params, seed)
    print(f"wrote {n_samples} samples to {out} (scaler: {sidecar})")
    return 0


def _print_record(record: MetricsRecord) -> None:
    for f in fields(MetricsRecord):
        print(f"{f.name} = {getattr(record, f.name)}")


def _write_run_timeseries(path, targets: np.ndarray, outputs: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "X", "Y", "Z", "Xhat", "Yhat", "Zhat"])
        for k in range(outputs.shape[0]):
            row = [k]
            row += [f"{v:.17g}" for v in targets[k]]
            row += [f"{v:.17g}" for v in outputs[k]]
            writer.writerow(row)


def _cmd_run(args: argparse.Namespace) -> int:
    file_config = _load_config_file(args.config)
    topology = _resolve(args, file_config, "topology", None)
    rho = _resolve(args, file_config, "rho", None)
    if topology is None or rho is None:
        raise ConfigError("run requires --topology and --rho")
    config = _base_config(
        args,
        file_config,
        topology=str(topology),
        rho=float(rho),
        realization_index=int(_resolve(args, file_config, "realization", 0)),
    )

    record, artifacts = run_realization_detailed(config)
    _print_record(record)
    if record.failed or artifacts is None:
        print(f"realization failed: {record.failure_reason}", file=sys.stderr)
        return 1

    if args.emit_model:
        artifacts.model.save(args.emit_model)
        print(f"model written to {args.emit_model}")
    if args.emit_timeseries:
        _write_run_timeseries(
            args.emit_timeseries,
            artifacts.prediction_targets.points,
            artifacts.closed_loop_outputs,
        )
        print(f"timeseries written to {args.emit_timeseries}")
    if args.emit_psd:
        spectrum = psd(artifacts.closed_loop_outputs[:, 2], config.lorenz.dt_sample)
        write_psd_csv(spectrum, args.emit_psd)
        print(f"PSD written to {args.emit_psd}")
    return 0


def _parse_topologies(raw) -> list[str]:
    if isinstance(raw, str):
        names = [t.strip() for t in raw.split(",") if t.strip()]
    else:
        names = list(raw)
    if not names:
        raise ConfigError("topology list is empty")
    for name in names:
        if name not in TOPOLOGIES:
            raise ConfigError(f"unknown topology {name!r}; choose from {TOPOLOGIES}")
    return names


def _rho_grid(rho_min: float, rho_max: float, rho_step: float) -> list[float]:
    if rho_step <= 0:
        raise ConfigError(f"--rho-step must be positive, got {rho_step}")
    if rho_max < rho_min:
        raise ConfigError("--rho-max must be >= --rho-min")
    grid = []
    i = 0
    while True:
        value = round(rho_min + i * rho_step, 12)
        if value > rho_max + 1e-12:
            break
        grid.append(value)
        i += 1
    return grid


def _cmd_sweep(args: argparse.Namespace) -> int:
    file_config = _load_config_file(args.config)
    out = _resolve(args, file_config, "out", None)
    if out is None:
        raise ConfigError("sweep requires --out PREFIX")
    topologies = _parse_topologies(_resolve(args, file_config, "topologies", list(TOPOLOGIES)))
    grid = _rho_grid(
        float(_resolve(args, file_config, "rho_min", 0.0)),
        float(_resolve(args, file_config, "rho_max", 1.0)),
        float(_resolve(args, file_config, "rho_step", 0.025)),
    )
    n_realizations = int(_resolve(args, file_config, "realizations", 100))
    if n_realizations < 1:
        raise ConfigError(f"--realizations must be >= 1, got {n_realizations}")
    threads = int(_resolve(args, file_config, "threads", 1))
    base = _base_config(args, file_config)

    records, summary = run_sweep(topologies, grid, n_realizations, base, threads=threads)
    meta = sweep_meta(base, topologies, grid, n_realizations)
    paths = export(records, summary, out, meta)
    n_failed = sum(r.failed for r in records)
    print(f"{len(records)} realizations ({n_failed} failed)")
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    file_config = _load_config_file(args.config)
    records_path = _resolve(args, file_config, "records", None)
    out = _resolve(args, file_config, "out", None)
    if records_path is None or out is None:
        raise ConfigError("analyze requires --records FILE and --out PREFIX")
    try:
        records = read_records_csv(records_path)
    except OSError as exc:
        raise ConfigError(f"cannot read records file {records_path!r}: {exc}") from exc
    summary = aggregate(records)
    summary_path = Path(str(out) + "summary.csv")
    meta_path = Path(str(out) + "meta.json")
    write_summary_csv(summary, summary_path)
    write_meta_json(
        {
            "software": {"name": "esnchaos", "version": __version__},
            "source_records": str(records_path),
            "n_records": len(records),
        },
        meta_path,
    )
    print(f"summary: {summary_path}")
    print(f"meta: {meta_path}")
    return 0


def _add_common_model_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--nodes", type=int, help="reservoir size (default 20)")
    sub.add_argument("--lambda", dest="ridge_lambda", type=float,
                     help="readout regularisation (default 1e-6)")
    sub.add_argument("--input-scale", dest="input_scale", type=float,
                     help="input weight scale (default 1.45)")
    sub.add_argument("--washout", type=int, help="washout samples (default 10000)")
    sub.add_argument("--train", type=int, help="training samples (default 10000)")
    sub.add_argument("--test", type=int, help="open-loop test samples (default 5000)")
    sub.add_argument("--horizon", type=int, help="closed-loop steps (default 5000)")
    sub.add_argument("--sync", type=int, help="synchronisation samples (default 1000)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="esnchaos",
        description="Small-reservoir forecasting of the Lorenz-63 attractor.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    gen = subparsers.add_parser("generate", help="write a rescaled trajectory CSV")
    gen.add_argument("--samples", type=int, help="number of samples")
    gen.add_argument("--seed", type=int, help="random seed (default 0)")
    gen.add_argument("--transient", type=float, help="discarded model time (default 100)")
    gen.add_argument("--out", help="output CSV path")
    gen.add_argument("--config", help="JSON config file")
    gen.set_defaults(func=_cmd_generate)

    run = subparsers.add_parser("run", help="run a single realization")
    run.add_argument("--topology", choices=TOPOLOGIES, help="coupling topology")
    run.add_argument("--rho", type=float, help="target spectral radius")
    run.add_argument("--seed", type=int, help="master seed (default 0)")
    run.add_argument("--realization", type=int, help="realization index (default 0)")
    _add_common_model_options(run)
    run.add_argument("--emit-model", help="write the trained model JSON here")
    run.add_argument("--emit-timeseries", help="write k,X,Y,Z,Xhat,Yhat,Zhat CSV here")
    run.add_argument("--emit-psd", help="write the predicted-Z PSD CSV here")
    run.add_argument("--config", help="JSON config file")
    run.set_defaults(func=_cmd_run)

    sweep = subparsers.add_parser("sweep", help="run a full topology x rho sweep")
    sweep.add_argument("--topologies", help="comma-separated list (default all three)")
    sweep.add_argument("--rho-min", dest="rho_min", type=float, help="grid start (default 0.0)")
    sweep.add_argument("--rho-max", dest="rho_max", type=float, help="grid end (default 1.0)")
    sweep.add_argument("--rho-step", dest="rho_step", type=float, help="grid step (default 0.025)")
    sweep.add_argument("--realizations", type=int, help="realizations per cell (default 100)")
    sweep.add_argument("--seed", type=int, help="master seed (default 0)")
    sweep.add_argument("--threads", type=int, help="worker threads (default 1)")
    _add_common_model_options(sweep)
    sweep.add_argument("--out", help="output path prefix")
    sweep.add_argument("--config", help="JSON config file")
    sweep.set_defaults(func=_cmd_sweep)

    analyze = subparsers.add_parser("analyze", help="re-aggregate a records.csv")
    analyze.add_argument("--records", help="records.csv produced by sweep")
    analyze.add_argument("--out", help="output path prefix")
    analyze.add_argument("--config", help="JSON config file")
    analyze.set_defaults(func=_cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
