"""Experiment orchestration: seeded realizations, sweeps, statistics, files.

A realization is the full pipeline for one (topology, spectral radius, seed)
cell: generate data, build and train the reservoir, score the open-loop
test, run the autonomous forecast against a fresh randomly started target,
and collect every metric into one record. Sweeps run the cartesian product
of topologies x radius grid x realization indices with per-cell derived
seeds, so results are reproducible bit for bit regardless of thread count.
"""

from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .lorenz import (
    Dataset,
    LorenzParams,
    Trajectory,
    build_dataset,
    build_prediction_trajectory,
)
from .metrics import adev, classify, nrmse, true_lorenz_vpt, vpt
from .reservoir import TOPOLOGIES, EsnForecaster, TrainedModel

__all__ = [
    "RunConfig",
    "MetricsRecord",
    "SummaryRow",
    "RealizationArtifacts",
    "run_realization",
    "run_realization_detailed",
    "run_sweep",
    "aggregate",
    "export",
    "sweep_meta",
    "write_records_csv",
    "read_records_csv",
    "write_summary_csv",
    "write_meta_json",
    "data_entropy",
    "prediction_entropy",
    "weight_entropy",
]

# Stream tags keeping the independent seed substreams of one master seed
# disjoint: training data, prediction-phase data, weight draws.
_DATA_STREAM = 1
_PREDICTION_STREAM = 2
_WEIGHT_STREAM = 3

_TOPOLOGY_CODES = {name: i for i, name in enumerate(TOPOLOGIES)}


def data_entropy(master_seed: int, realization_index: int) -> tuple[int, ...]:
    """Seed entropy for the training/test trajectory of one realization."""
    return (int(master_seed), _DATA_STREAM, int(realization_index))


def prediction_entropy(master_seed: int, realization_index: int) -> tuple[int, ...]:
    """Seed entropy for the prediction-phase target of one realization."""
    return (int(master_seed), _PREDICTION_STREAM, int(realization_index))


def weight_entropy(
    master_seed: int, topology: str, rho_index: int, realization_index: int
) -> tuple[int, ...]:
    """Per-cell seed entropy for the random weight draws."""
    return (
        int(master_seed),
        _WEIGHT_STREAM,
        _TOPOLOGY_CODES[topology],
        int(rho_index),
        int(realization_index),
    )


@dataclass(frozen=True)
class RunConfig:
    """Everything one realization depends on."""

    topology: str = "uncoupled"
    rho: float = 0.1
    n_nodes: int = 20
    input_scale: float = 1.45
    ridge_lambda: float = 1e-6
    k_washout: int = 10000
    k_train: int = 10000
    k_test: int = 5000
    horizon: int = 5000
    sync_steps: int = 1000
    master_seed: int = 0
    realization_index: int = 0
    rho_index: int = 0
    weight_seed: int | tuple | None = None
    lorenz: LorenzParams = field(default_factory=LorenzParams)

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}, got {self.topology!r}")
        if self.rho < 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        for name in ("n_nodes", "k_washout", "k_train", "k_test", "horizon", "sync_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.ridge_lambda < 0:
            raise ValueError(f"ridge_lambda must be >= 0, got {self.ridge_lambda}")
        if self.input_scale < 0:
            raise ValueError(f"input_scale must be >= 0, got {self.input_scale}")

    def weight_seed_sequence(self) -> np.random.SeedSequence:
        """Seed for the weight draws.

        By default this is the per-cell hash of (master seed, topology, rho
        index, realization index); an explicit ``weight_seed`` overrides it,
        which is how weights are shared across topologies (e.g. to exercise
        the memoryless limit where all three coincide).
        """
        if self.weight_seed is not None:
            return np.random.SeedSequence(self.weight_seed)
        return np.random.SeedSequence(
            weight_entropy(self.master_seed, self.topology, self.rho_index, self.realization_index)
        )


@dataclass
class MetricsRecord:
    """Per-realization results; field order is the records.csv column order."""

    topology: str
    rho_r: float
    realization_index: int
    nrmse_x: float
    nrmse_y: float
    nrmse_z: float
    vpt: float
    vpt_lyapunov: float
    bounded: bool
    oscillatory: bool
    oscillatory_steps: int
    adev: int | None
    rho_a: float
    true_lorenz_vpt: float
    true_lorenz_vpt_lyapunov: float
    failed: bool = False
    failure_reason: str = ""


def _failed_record(config: RunConfig, reason: str) -> MetricsRecord:
    nan = float("nan")
    return MetricsRecord(
        topology=config.topology,
        rho_r=config.rho,
        realization_index=config.realization_index,
        nrmse_x=nan,
        nrmse_y=nan,
        nrmse_z=nan,
        vpt=nan,
        vpt_lyapunov=nan,
        bounded=False,
        oscillatory=False,
        oscillatory_steps=0,
        adev=None,
        rho_a=nan,
        true_lorenz_vpt=nan,
        true_lorenz_vpt_lyapunov=nan,
        failed=True,
        failure_reason=reason,
    )


@dataclass
class RealizationArtifacts:
    """Intermediate products of one realization, for exports and probes."""

    model: TrainedModel
    open_loop_outputs: np.ndarray
    test_targets: np.ndarray
    closed_loop_outputs: np.ndarray
    prediction_targets: Trajectory
    diverged_at: int | None


def _run_pipeline(
    config: RunConfig,
    dataset: Dataset | None,
    prediction: Trajectory | None,
) -> tuple[MetricsRecord, RealizationArtifacts]:
    params = config.lorenz
    if dataset is None:
        dataset = build_dataset(
            params,
            data_entropy(config.master_seed, config.realization_index),
            config.k_washout,
            config.k_train,
            config.k_test,
        )
    if prediction is None:
        prediction = build_prediction_trajectory(
            params,
            prediction_entropy(config.master_seed, config.realization_index),
            config.sync_steps + config.horizon,
            dataset.scaler,
        )
    if len(prediction) < config.sync_steps + config.horizon:
        raise ValueError("prediction trajectory shorter than sync_steps + horizon")

    estimator = EsnForecaster(
        n_nodes=config.n_nodes,
        topology=config.topology,
        spectral_radius=config.rho,
        input_scale=config.input_scale,
        ridge_lambda=config.ridge_lambda,
        washout=config.k_washout,
        seed=config.weight_seed_sequence(),
    )
    estimator.fit(dataset.fit_inputs(), dataset.fit_targets())

    open_outputs = estimator.predict(dataset.test_inputs.points)
    test_targets = dataset.test_targets.points
    nrmse_xyz = [nrmse(test_targets[:, i], open_outputs[:, i]) for i in range(3)]

    sync_inputs = prediction.points[: config.sync_steps]
    target_points = prediction.points[config.sync_steps : config.sync_steps + config.horizon]
    outputs, diverged_at = estimator.forecast(config.horizon, sync_inputs=sync_inputs)

    classification = classify(outputs, horizon=config.horizon)
    n_emitted = outputs.shape[0]
    vpt_result = vpt(target_points[:n_emitted], outputs, params.dt_sample)

    adev_value = adev(outputs, target_points) if classification.bounded else None

    targets = Trajectory(params.dt_sample, target_points, dataset.scaler)
    try:
        benchmark = true_lorenz_vpt(outputs[0], targets, params)
        benchmark_t = benchmark.t_vpt
        benchmark_t_lyap = benchmark.t_vpt_lyapunov
    except Exception:  # wild first prediction: benchmark undefined, not fatal
        benchmark_t = float("nan")
        benchmark_t_lyap = float("nan")

    record = MetricsRecord(
        topology=config.topology,
        rho_r=config.rho,
        realization_index=config.realization_index,
        nrmse_x=nrmse_xyz[0],
        nrmse_y=nrmse_xyz[1],
        nrmse_z=nrmse_xyz[2],
        vpt=vpt_result.t_vpt,
        vpt_lyapunov=vpt_result.t_vpt_lyapunov,
        bounded=classification.bounded,
        oscillatory=classification.oscillatory,
        oscillatory_steps=classification.oscillatory_steps,
        adev=adev_value,
        rho_a=estimator.model_.rho_autonomous,
        true_lorenz_vpt=benchmark_t,
        true_lorenz_vpt_lyapunov=benchmark_t_lyap,
    )
    artifacts = RealizationArtifacts(
        model=estimator.model_,
        open_loop_outputs=open_outputs,
        test_targets=test_targets,
        closed_loop_outputs=outputs,
        prediction_targets=targets,
        diverged_at=diverged_at,
    )
    return record, artifacts


def run_realization(
    config: RunConfig,
    dataset: Dataset | None = None,
    prediction: Trajectory | None = None,
) -> MetricsRecord:
    """Run the full pipeline for one realization.

    ``dataset`` and ``prediction`` may be passed in when the caller has
    already generated them (their content is fixed by the config seeds, so
    this is purely a cache). Any pipeline failure is captured as a record
    with ``failed=True`` and the reason, never an exception, so sweeps keep
    going.
    """
    return run_realization_detailed(config, dataset, prediction)[0]


def run_realization_detailed(
    config: RunConfig,
    dataset: Dataset | None = None,
    prediction: Trajectory | None = None,
) -> tuple[MetricsRecord, RealizationArtifacts | None]:
    """Like :func:`run_realization` but also returns intermediate artifacts
    (None when the pipeline failed)."""
    try:
        return _run_pipeline(config, dataset, prediction)
    except Exception as exc:
        return _failed_record(config, f"{type(exc).__name__}: {exc}"), None


def run_sweep(
    topologies,
    rho_grid,
    n_realizations: int,
    base_config: RunConfig = RunConfig(),
    threads: int = 1,
) -> tuple[list[MetricsRecord], list["SummaryRow"]]:
    """Cartesian sweep over topologies x rho grid x realization indices.

    Per-cell weight seeds are derived from (master seed, topology, rho
    index, realization index); the training and prediction trajectories
    depend only on (master seed, realization index) and are shared across
    cells. Execution order never affects the output: records are merged in
    (topology, rho, realization) index order.
    """
    topologies = list(topologies)
    if not topologies:
        raise ValueError("topologies must be non-empty")
    for t in topologies:
        if t not in TOPOLOGIES:
            raise ValueError(f"unknown topology {t!r}")
    if len(set(topologies)) != len(topologies):
        raise ValueError("topologies contains duplicates")
    rho_grid = [float(r) for r in rho_grid]
    if not rho_grid:
        raise ValueError("rho_grid must be non-empty")
    if any(r < 0 for r in rho_grid):
        raise ValueError("rho values must be >= 0")
    if n_realizations < 1:
        raise ValueError(f"n_realizations must be >= 1, got {n_realizations}")
    threads = max(1, int(threads))

    params = base_config.lorenz

    def make_dataset(r: int) -> Dataset:
        return build_dataset(
            params,
            data_entropy(base_config.master_seed, r),
            base_config.k_washout,
            base_config.k_train,
            base_config.k_test,
        )

    with ThreadPoolExecutor(max_workers=threads) as pool:
        datasets = list(pool.map(make_dataset, range(n_realizations)))

        def make_prediction(r: int) -> Trajectory:
            return build_prediction_trajectory(
                params,
                prediction_entropy(base_config.master_seed, r),
                base_config.sync_steps + base_config.horizon,
                datasets[r].scaler,
            )

        predictions = list(pool.map(make_prediction, range(n_realizations)))

        tasks = [
            (topology, rho_index, rho, r)
            for topology in topologies
            for rho_index, rho in enumerate(rho_grid)
            for r in range(n_realizations)
        ]

        def job(task) -> MetricsRecord:
            topology, rho_index, rho, r = task
            config = replace(
                base_config,
                topology=topology,
                rho=rho,
                rho_index=rho_index,
                realization_index=r,
            )
            return run_realization(config, datasets[r], predictions[r])

        records = list(pool.map(job, tasks))

    return records, aggregate(records)


@dataclass
class SummaryRow:
    """Aggregate statistics for one (topology, rho) cell."""

    topology: str
    rho_r: float
    n_records: int
    n_failed: int
    n_bounded: int
    nrmse_x_mean: float
    nrmse_x_std: float
    nrmse_y_mean: float
    nrmse_y_std: float
    nrmse_z_mean: float
    nrmse_z_std: float
    rho_a_mean: float
    rho_a_std: float
    vpt_median: float
    vpt_p25: float
    vpt_p75: float
    true_lorenz_vpt_median: float
    true_lorenz_vpt_p25: float
    true_lorenz_vpt_p75: float
    adev_median: float | None
    adev_p25: float | None
    adev_p75: float | None
    oscillatory_steps_median: float | None
    oscillatory_steps_p25: float | None
    oscillatory_steps_p75: float | None
    bounded_fraction: float
    oscillatory_fraction: float


def _sorted_values(values) -> np.ndarray:
    return np.sort(np.asarray(list(values), dtype=float))


def _mean_std(values) -> tuple[float, float]:
    v = _sorted_values(values)
    return float(v.mean()), float(v.std())


def _quartiles(values) -> tuple[float, float, float]:
    v = _sorted_values(values)
    p25, p50, p75 = np.percentile(v, [25.0, 50.0, 75.0])
    return float(p50), float(p25), float(p75)


def aggregate(records: list[MetricsRecord]) -> list[SummaryRow]:
    """Summarise records per (topology, rho) cell.

    Means use the population standard deviation; quartiles use linear
    interpolation. Cell deviation and oscillatory-run-time statistics are
    computed over bounded runs only. Cells whose records all failed are
    omitted with a warning. Values are sorted before reduction so the output
    is invariant under permutations of the record list.
    """
    cells: dict[tuple[str, float], list[MetricsRecord]] = {}
    for record in records:
        cells.setdefault((record.topology, record.rho_r), []).append(record)

    rows = []
    for (topology, rho_r) in sorted(cells, key=lambda k: (k[0], k[1])):
        group = cells[(topology, rho_r)]
        ok = [r for r in group if not r.failed]
        n_failed = len(group) - len(ok)
        if not ok:
            warnings.warn(
                f"cell (topology={topology}, rho={rho_r}) has no successful "
                "records; omitted from the summary"
            )
            continue
        bounded = [r for r in ok if r.bounded]
        nx_mean, nx_std = _mean_std(r.nrmse_x for r in ok)
        ny_mean, ny_std = _mean_std(r.nrmse_y for r in ok)
        nz_mean, nz_std = _mean_std(r.nrmse_z for r in ok)
        ra_mean, ra_std = _mean_std(r.rho_a for r in ok)
        vpt_med, vpt_p25, vpt_p75 = _quartiles(r.vpt for r in ok)
        tl_med, tl_p25, tl_p75 = _quartiles(r.true_lorenz_vpt for r in ok)
        if bounded:
            adev_med, adev_p25, adev_p75 = _quartiles(r.adev for r in bounded)
            osc_med, osc_p25, osc_p75 = _quartiles(r.oscillatory_steps for r in bounded)
        else:
            adev_med = adev_p25 = adev_p75 = None
            osc_med = osc_p25 = osc_p75 = None
        rows.append(
            SummaryRow(
                topology=topology,
                rho_r=rho_r,
                n_records=len(group),
                n_failed=n_failed,
                n_bounded=len(bounded),
                nrmse_x_mean=nx_mean,
                nrmse_x_std=nx_std,
                nrmse_y_mean=ny_mean,
                nrmse_y_std=ny_std,
                nrmse_z_mean=nz_mean,
                nrmse_z_std=nz_std,
                rho_a_mean=ra_mean,
                rho_a_std=ra_std,
                vpt_median=vpt_med,
                vpt_p25=vpt_p25,
                vpt_p75=vpt_p75,
                true_lorenz_vpt_median=tl_med,
                true_lorenz_vpt_p25=tl_p25,
                true_lorenz_vpt_p75=tl_p75,
                adev_median=adev_med,
                adev_p25=adev_p25,
                adev_p75=adev_p75,
                oscillatory_steps_median=osc_med,
                oscillatory_steps_p25=osc_p25,
                oscillatory_steps_p75=osc_p75,
                bounded_fraction=len(bounded) / len(ok),
                oscillatory_fraction=sum(r.oscillatory for r in ok) / len(ok),
            )
        )
    return rows


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records_csv(records: list[MetricsRecord], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = [f.name for f in fields(MetricsRecord)]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for record in records:
            writer.writerow([_format_value(getattr(record, n)) for n in names])


def read_records_csv(path) -> list[MetricsRecord]:
    """Parse a records.csv back into records (full float precision)."""

    def parse_bool(s: str) -> bool:
        return s == "true"

    def parse_opt_int(s: str):
        return None if s == "" else int(s)

    parsers = {
        "topology": str,
        "rho_r": float,
        "realization_index": int,
        "nrmse_x": float,
        "nrmse_y": float,
        "nrmse_z": float,
        "vpt": float,
        "vpt_lyapunov": float,
        "bounded": parse_bool,
        "oscillatory": parse_bool,
        "oscillatory_steps": int,
        "adev": parse_opt_int,
        "rho_a": float,
        "true_lorenz_vpt": float,
        "true_lorenz_vpt_lyapunov": float,
        "failed": parse_bool,
        "failure_reason": str,
    }
    records = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        expected = [f.name for f in fields(MetricsRecord)]
        if reader.fieldnames != expected:
            raise ValueError(
                f"unexpected records header {reader.fieldnames}, expected {expected}"
            )
        for row in reader:
            records.append(
                MetricsRecord(**{name: parsers[name](row[name]) for name in expected})
            )
    return records


def write_summary_csv(summary: list[SummaryRow], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = [f.name for f in fields(SummaryRow)]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in summary:
            writer.writerow([_format_value(getattr(row, n)) for n in names])


def write_meta_json(meta: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def sweep_meta(
    base_config: RunConfig,
    topologies,
    rho_grid,
    n_realizations: int,
) -> dict:
    """Everything needed to reproduce a sweep and interpret its outputs."""
    params = base_config.lorenz
    return {
        "software": {"name": "esnchaos", "version": __version__},
        "prng": "numpy default_rng (PCG64) seeded via SeedSequence entropy tuples",
        "seed_scheme": {
            "data": "(master_seed, 1, realization_index)",
            "prediction": "(master_seed, 2, realization_index)",
            "weights": "(master_seed, 3, topology_code, rho_index, realization_index)",
            "topology_codes": _TOPOLOGY_CODES,
        },
        "master_seed": base_config.master_seed,
        "topologies": list(topologies),
        "rho_grid": [float(r) for r in rho_grid],
        "n_realizations": int(n_realizations),
        "config": {
            "n_nodes": base_config.n_nodes,
            "input_scale": base_config.input_scale,
            "ridge_lambda": base_config.ridge_lambda,
            "k_washout": base_config.k_washout,
            "k_train": base_config.k_train,
            "k_test": base_config.k_test,
            "horizon": base_config.horizon,
            "sync_steps": base_config.sync_steps,
            "lorenz": {
                "c1": params.c1,
                "c2": params.c2,
                "c3": params.c3,
                "h": params.h,
                "dt_sample": params.dt_sample,
            },
        },
        "conventions": {
            "input_weight_distribution": "iid uniform on [-input_scale, input_scale]",
            "scaler_fit": "full generated trajectory (washout + train + test)",
            "initial_condition_box": "[-10,10] x [-10,10] x [5,30] raw units",
            "transient_time": 100.0,
            "divergence_bound": 1e6,
            "vpt_threshold": 0.4,
            "vpt_crossing": "first crossing of the normalised error",
            "lyapunov_exponent": 0.91,
            "adev_cube": 0.1,
            "bounded_limit": 2.0,
            "fixed_point_window": 100,
            "fixed_point_eps": 1e-3,
            "percentiles": "linear interpolation; std is population std",
        },
    }


def export(
    records: list[MetricsRecord],
    summary: list[SummaryRow],
    path_prefix,
    meta: dict | None = None,
) -> dict[str, Path]:
    """Write ``records.csv``, ``summary.csv`` and ``meta.json``.

    ``path_prefix`` is prepended verbatim (use a trailing separator for a
    directory). Returns the paths written.
    """
    prefix = str(path_prefix)
    paths = {
        "records": Path(prefix + "records.csv"),
        "summary": Path(prefix + "summary.csv"),
        "meta": Path(prefix + "meta.json"),
    }
    try:
        write_records_csv(records, paths["records"])
        write_summary_csv(summary, paths["summary"])
        write_meta_json(meta or {}, paths["meta"])
    except OSError as exc:
        raise OSError(f"failed writing sweep outputs with prefix {prefix!r}: {exc}") from exc
    return paths
