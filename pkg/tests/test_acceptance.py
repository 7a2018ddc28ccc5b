"""Acceptance suite: exactness identities, oracle agreements, and the
statistical behaviour of the three reservoir topologies.

Statistical checks run one shared sweep at the package defaults (20 nodes,
washout/train/test 10000/10000/5000, horizon 5000, sync 1000, ridge 1e-6)
with 100 realizations per cell on a radius grid that is dense below 0.4,
where the topologies separate. The checks assert orderings and trends, not
exact values; the master seed is fixed so every run is reproducible.
"""

import dataclasses
import math
import os

import numpy as np
import pytest
from scipy.stats import spearmanr

from esnchaos.harness import (
    RunConfig,
    run_realization,
    run_sweep,
    write_records_csv,
)
from esnchaos.linalg import eigen_magnitudes, ridge_solve, spectral_radius
from esnchaos.lorenz import LorenzParams, build_dataset, generate_raw
from esnchaos.metrics import adev, nrmse, vpt
from esnchaos.reservoir import (
    TOPOLOGIES,
    EsnForecaster,
    TrainedModel,
    build_coupling,
    build_input_weights,
    run_closed_loop,
)
from helpers import benettin_lyapunov, feedback_outputs, reference_adev

MASTER_SEED = 20260810
N_REALIZATIONS = 100
RHO_GRID = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.5, 0.6, 0.7, 0.8]
THREADS = min(4, os.cpu_count() or 1)


@pytest.fixture(scope="module")
def sweep():
    base = RunConfig(master_seed=MASTER_SEED)
    records, summary = run_sweep(list(TOPOLOGIES), RHO_GRID, N_REALIZATIONS, base, threads=THREADS)
    failed = [r for r in records if r.failed]
    assert not failed, f"{len(failed)} realizations failed, e.g. {failed[0].failure_reason}"
    return records, summary


def cells(summary, topology):
    return sorted([s for s in summary if s.topology == topology], key=lambda s: s.rho_r)


def cell(summary, topology, rho):
    (match,) = [s for s in summary if s.topology == topology and s.rho_r == rho]
    return match


# -- criterion 1: closed-loop identity ------------------------------------


def test_criterion_01_closed_loop_identity_vs_output_feedback():
    """Iterating the derived autonomous system reproduces explicit output
    feedback through the original weights to 1e-12 over 100 steps."""
    master = np.random.SeedSequence(314)
    for index, child in enumerate(master.spawn(20)):
        rng = np.random.default_rng(child)
        topology = TOPOLOGIES[index % 3]
        coupling = build_coupling(topology, 20, rng.uniform(0.0, 1.0), child)
        weights = build_input_weights(20, 3, 1.45, child.spawn(1)[0])
        readout = rng.normal(0.0, 0.3, size=(21, 3))
        model = TrainedModel.from_weights(topology, 0.5, 1e-6, coupling, weights, readout)
        state = rng.uniform(-0.9, 0.9, 20)
        outputs, diverged = run_closed_loop(model, state.copy(), 100)
        assert diverged is None
        oracle = feedback_outputs(model, state, 100)
        worst = np.abs(outputs - oracle).max()
        assert worst <= 1e-12, f"model {index} ({topology}): max deviation {worst:.3e}"


# -- criterion 2: memoryless limit -----------------------------------------


def test_criterion_02_memoryless_limit_bit_identity():
    """At spectral radius zero with shared seeds the three topologies give
    bit-identical state matrices, readouts, and metrics."""
    params = LorenzParams()
    dataset = build_dataset(params, (MASTER_SEED, 1, 0), 10000, 10000, 5000)
    matrices, readouts = [], []
    for topology in TOPOLOGIES:
        est = EsnForecaster(topology=topology, spectral_radius=0.0, washout=10000, seed=41)
        est.fit(dataset.fit_inputs(), dataset.fit_targets())
        fresh = EsnForecaster(topology=topology, spectral_radius=0.0, washout=10000, seed=41)
        fresh.fit(dataset.fit_inputs(), dataset.fit_targets())
        matrices.append(fresh.reservoir_.harvest(dataset.fit_inputs(), 10000))
        readouts.append(est.readout_)
    for matrix, readout in zip(matrices[1:], readouts[1:]):
        assert matrices[0].tobytes() == matrix.tobytes()
        assert readouts[0].tobytes() == readout.tobytes()

    records = [
        run_realization(
            RunConfig(topology=topology, rho=0.0, master_seed=MASTER_SEED, weight_seed=41)
        )
        for topology in TOPOLOGIES
    ]
    reference = dataclasses.asdict(records[0])
    for record in records[1:]:
        candidate = dataclasses.asdict(record)
        for key, value in reference.items():
            if key == "topology":
                continue
            assert candidate[key] == value, f"field {key} differs: {candidate[key]} vs {value}"


# -- criterion 3: linear algebra oracles -----------------------------------


def test_criterion_03_linear_algebra_oracles():
    ring = build_coupling("ring", 20, 1.0)
    assert abs(spectral_radius(ring) - 1.0) <= 1e-10

    mags = np.sort(eigen_magnitudes([[1.0, 4.0], [0.0, 3.0]]))
    assert np.abs(mags - [1.0, 3.0]).max() <= 1e-10
    mags = np.sort(eigen_magnitudes([[0.0, 2.0], [0.5, 0.0]]))
    assert np.abs(mags - [1.0, 1.0]).max() <= 1e-10

    rng = np.random.default_rng(77)
    design = rng.normal(size=(200, 21))
    targets = rng.normal(size=(200, 3))
    for lam in (0.0, 1e-6, 1e-2):
        w = ridge_solve(design, targets, lam)
        gram = design.T @ design + lam * np.eye(21)
        rhs = design.T @ targets
        rel = np.linalg.norm(gram @ w - rhs) / np.linalg.norm(rhs)
        assert rel <= 1e-8, f"lambda={lam}: relative residual {rel:.3e}"


# -- criterion 4: integrator ------------------------------------------------


def test_criterion_04_integrator_order_and_divergence_rate():
    params = LorenzParams()
    start = generate_raw(params, [1.0, 1.0, 1.0], 1, 100.0)[0]
    coarse = generate_raw(params, start, 11, 0.0)
    fine = generate_raw(LorenzParams(h=1e-5), start, 11, 0.0)
    assert np.abs(coarse - fine).max() <= 1e-8

    estimate = benettin_lyapunov(params, n_intervals=5000)
    assert 0.91 - 0.15 <= estimate <= 0.91 + 0.15, f"divergence-rate estimate {estimate:.3f}"


# -- criterion 5: metric fixtures -------------------------------------------


def test_criterion_05_metric_fixtures():
    rng = np.random.default_rng(11)
    y = rng.normal(size=321)
    assert nrmse(y, np.full_like(y, np.mean(y))) == 1.0

    k = np.arange(40)
    targets = np.stack([(k % 2), ((k + 1) % 2), (k % 2)], axis=1).astype(float)
    predictions = targets.copy()
    predictions[10:] += 1.0
    result = vpt(targets, predictions, dt=0.1, threshold=0.4)
    assert result.t_vpt == 1.0 and result.crossed

    fixtures = [rng.uniform(-0.4, 1.4, size=(25, 3)) for _ in range(4)]
    for a in fixtures:
        assert adev(a, a) == 0
        for b in fixtures:
            assert adev(a, b) == adev(b, a)
            for c in fixtures:
                assert adev(a, c) <= adev(a, b) + adev(b, c)


# -- criterion 6: bounded-fraction dominance of the uncoupled topology ------


def test_criterion_06_uncoupled_bounded_fraction_dominates(sweep):
    _, summary = sweep
    in_range = [rho for rho in RHO_GRID if 0.1 <= rho <= 0.8]
    for other in ("ring", "random"):
        wins = sum(
            cell(summary, "uncoupled", rho).bounded_fraction
            >= cell(summary, other, rho).bounded_fraction
            for rho in in_range
        )
        fraction = wins / len(in_range)
        assert fraction >= 0.7, f"uncoupled >= {other} at only {fraction:.0%} of grid points"
    best = max(cell(summary, "uncoupled", rho).bounded_fraction for rho in in_range)
    assert best > 0.75, f"uncoupled bounded fraction peaks at {best:.2f}"


# -- criterion 7: open-loop error is lowest in the memoryless limit ---------


def test_criterion_07_open_loop_error_minimum_near_zero_radius(sweep):
    _, summary = sweep
    for topology in TOPOLOGIES:
        rows = cells(summary, topology)
        for component in ("nrmse_x_mean", "nrmse_y_mean", "nrmse_z_mean"):
            values = [getattr(row, component) for row in rows]
            argmin_rho = rows[int(np.argmin(values))].rho_r
            assert argmin_rho <= 0.1, (
                f"{topology} {component} minimal at rho={argmin_rho}, not near 0"
            )


# -- criterion 8: spectral radius of the trained system ---------------------


def test_criterion_08_trained_spectral_radius_ordering(sweep):
    _, summary = sweep
    for topology in TOPOLOGIES:
        rows = cells(summary, topology)
        correlation = spearmanr(
            [row.rho_r for row in rows], [row.rho_a_mean for row in rows]
        ).statistic
        assert correlation >= 0.8, f"{topology}: Spearman(rho_a, rho) = {correlation:.2f}"

    low = [rho for rho in RHO_GRID if rho < 0.35]
    for other in ("ring", "random"):
        wins = sum(
            cell(summary, "uncoupled", rho).rho_a_mean < cell(summary, other, rho).rho_a_mean
            for rho in low
        )
        fraction = wins / len(low)
        assert fraction >= 0.7, (
            f"uncoupled rho_a below {other} at only {fraction:.0%} of low-radius points"
        )


# -- criterion 9: restarted-true-system benchmark bounds the forecast -------


def test_criterion_09_true_system_benchmark_bounds_vpt(sweep):
    records, summary = sweep
    rows = cells(summary, "uncoupled")
    best = rows[int(np.argmax([row.vpt_median for row in rows]))]
    group = [
        r
        for r in records
        if r.topology == "uncoupled" and r.rho_r == best.rho_r and math.isfinite(r.true_lorenz_vpt)
    ]
    assert len(group) >= 0.95 * N_REALIZATIONS

    bounded_by_oracle = np.mean([r.vpt <= r.true_lorenz_vpt for r in group])
    reservoir_vpt = np.array([r.vpt for r in group])
    median_reservoir = np.median(reservoir_vpt)
    median_oracle = np.median([r.true_lorenz_vpt for r in group])
    iqr = np.percentile(reservoir_vpt, 75) - np.percentile(reservoir_vpt, 25)

    assert bounded_by_oracle >= 0.9, (
        f"benchmark bounds the forecast in only {bounded_by_oracle:.0%} of realizations "
        f"at rho={best.rho_r}"
    )
    assert abs(median_oracle - median_reservoir) < iqr, (
        f"median gap {abs(median_oracle - median_reservoir):.2f} exceeds IQR {iqr:.2f}"
    )


# -- criterion 10: attractor-coverage deviation in the stable region --------


def test_criterion_10_cell_deviation_orderings(sweep):
    records, _ = sweep
    reference, _ = reference_adev(seed_family=123)
    region = [rho for rho in RHO_GRID if rho < 0.35]

    medians = {}
    for topology in TOPOLOGIES:
        values = [
            r.adev
            for r in records
            if r.topology == topology and r.rho_r in region and r.bounded and r.adev is not None
        ]
        assert values, f"no bounded runs for {topology} in the low-radius region"
        medians[topology] = float(np.median(values))

    assert medians["uncoupled"] < 3 * reference, (
        f"uncoupled median {medians['uncoupled']:.0f} vs 3x reference {3 * reference:.0f}"
    )
    assert medians["ring"] > medians["uncoupled"]
    assert medians["random"] > medians["uncoupled"]


# -- criterion 11: determinism across thread counts -------------------------


def test_criterion_11_thread_count_determinism(tmp_path):
    base = RunConfig(
        topology="uncoupled",
        rho=0.1,
        master_seed=MASTER_SEED,
        k_washout=500,
        k_train=800,
        k_test=300,
        horizon=400,
        sync_steps=150,
    )
    blobs = {}
    for threads in (1, 4):
        records, _ = run_sweep(["uncoupled", "ring", "random"], [0.0, 0.2], 3, base, threads=threads)
        path = tmp_path / f"records_{threads}.csv"
        write_records_csv(records, path)
        blobs[threads] = path.read_bytes()
    assert blobs[1] == blobs[4]
