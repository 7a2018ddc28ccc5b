"""Lorenz-63 trajectory generation, sampling, rescaling, and dataset assembly.

Trajectories are integrated with classical RK4 at a fine internal step,
subsampled on a coarser grid, and affinely rescaled to the unit cube before
they are fed to a reservoir. A dataset is one contiguous trajectory split
into washout, training, and test segments with one-step-ahead targets.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels

__all__ = [
    "IntegrationDiverged",
    "LorenzParams",
    "AffineScaler",
    "Trajectory",
    "Dataset",
    "lorenz_derivative",
    "rk4_step",
    "generate_raw",
    "random_initial_state",
    "fit_scaler",
    "build_dataset",
    "build_prediction_trajectory",
    "write_trajectory_csv",
    "read_scaler_json",
]

# Raw-unit component bound beyond which integration is declared divergent.
DIVERGENCE_BOUND = 1e6

# Model-time transient discarded so random initial conditions land on the
# attractor before sampling starts.
DEFAULT_TRANSIENT = 100.0

# Component ranges for random initial conditions, raw units.
INITIAL_BOX = ((-10.0, 10.0), (-10.0, 10.0), (5.0, 30.0))


class IntegrationDiverged(RuntimeError):
    """Integration left the finite/bounded region."""


@dataclass(frozen=True)
class LorenzParams:
    """Flow coefficients plus integration and sampling steps (model time)."""

    c1: float = 10.0
    c2: float = 28.0
    c3: float = 8.0 / 3.0
    h: float = 1e-3
    dt_sample: float = 0.1

    def __post_init__(self):
        if not (self.h > 0):
            raise ValueError(f"h must be positive, got {self.h!r}")
        if not (self.dt_sample > 0):
            raise ValueError(f"dt_sample must be positive, got {self.dt_sample!r}")
        ratio = self.dt_sample / self.h
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(
                f"dt_sample ({self.dt_sample}) must be an integer multiple of h ({self.h})"
            )

    @property
    def steps_per_sample(self) -> int:
        return round(self.dt_sample / self.h)


def lorenz_derivative(state, params: LorenzParams = LorenzParams()) -> np.ndarray:
    """Right-hand side of the flow at ``state`` (raw units)."""
    s = np.asarray(state, dtype=float)
    if s.shape != (3,):
        raise ValueError(f"state must be a 3-vector, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("state must be finite")
    x, y, z = s
    return np.array(
        [
            params.c1 * (y - x),
            x * (params.c2 - z) - y,
            x * y - params.c3 * z,
        ]
    )


def rk4_step(state, h: float, params: LorenzParams = LorenzParams()) -> np.ndarray:
    """One classical RK4 update of the flow with step ``h > 0``."""
    if not (h > 0):
        raise ValueError(f"h must be positive, got {h!r}")
    s = np.asarray(state, dtype=float)
    if s.shape != (3,):
        raise ValueError(f"state must be a 3-vector, got shape {s.shape}")
    x, y, z = _kernels.rk4_single(s[0], s[1], s[2], float(h), params.c1, params.c2, params.c3)
    return np.array([x, y, z])


def generate_raw(
    params: LorenzParams,
    initial_state,
    n_samples: int,
    transient_time: float,
) -> np.ndarray:
    """Integrate from ``initial_state``, drop the transient, sample the rest.

    Integration uses step ``params.h``; after discarding ``transient_time``
    model-time units the state is recorded every ``params.dt_sample`` (the
    first sample is the post-transient state itself). Returns an
    ``(n_samples, 3)`` array in raw units.

    Raises
    ------
    IntegrationDiverged
        If any component exceeds ``DIVERGENCE_BOUND`` or becomes non-finite.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if transient_time < 0:
        raise ValueError(f"transient_time must be >= 0, got {transient_time}")
    s = np.asarray(initial_state, dtype=float)
    if s.shape != (3,) or not np.all(np.isfinite(s)):
        raise ValueError("initial_state must be a finite 3-vector")
    n_transient = round(transient_time / params.h)
    samples, status = _kernels.lorenz_orbit(
        s[0],
        s[1],
        s[2],
        params.h,
        params.steps_per_sample,
        int(n_samples),
        n_transient,
        params.c1,
        params.c2,
        params.c3,
        DIVERGENCE_BOUND,
    )
    if status >= 0:
        raise IntegrationDiverged(
            f"integration diverged at sample {status} "
            f"(component bound {DIVERGENCE_BOUND:g})"
        )
    return samples


def random_initial_state(rng: np.random.Generator) -> np.ndarray:
    """Draw a raw initial condition uniformly from ``INITIAL_BOX``."""
    return np.array([rng.uniform(lo, hi) for lo, hi in INITIAL_BOX])


@dataclass
class AffineScaler:
    """Per-component affine map between raw units and the unit cube."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        self.minimum = np.asarray(self.minimum, dtype=float)
        self.maximum = np.asarray(self.maximum, dtype=float)
        if self.minimum.shape != (3,) or self.maximum.shape != (3,):
            raise ValueError("scaler bounds must be 3-vectors")
        if not np.all(self.maximum > self.minimum):
            raise ValueError("each component must satisfy maximum > minimum")

    def transform(self, raw) -> np.ndarray:
        return (np.asarray(raw, dtype=float) - self.minimum) / (self.maximum - self.minimum)

    def inverse(self, scaled) -> np.ndarray:
        return np.asarray(scaled, dtype=float) * (self.maximum - self.minimum) + self.minimum

    def to_dict(self) -> dict:
        return {"min": self.minimum.tolist(), "max": self.maximum.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "AffineScaler":
        return cls(np.asarray(d["min"], dtype=float), np.asarray(d["max"], dtype=float))


def fit_scaler(raw) -> AffineScaler:
    """Per-component min/max scaler fitted on a raw sample sequence."""
    arr = np.asarray(raw, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 2:
        raise ValueError(f"need a (>=2, 3) sample array, got shape {arr.shape}")
    lo = arr.min(axis=0)
    hi = arr.max(axis=0)
    if np.any(hi == lo):
        degenerate = [i for i in range(3) if hi[i] == lo[i]]
        raise ValueError(f"degenerate component(s) {degenerate}: max equals min")
    return AffineScaler(lo, hi)


@dataclass
class Trajectory:
    """A uniformly sampled sequence of rescaled states plus its scaler."""

    dt: float
    points: np.ndarray
    scaler: AffineScaler

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError(f"points must have shape (K, 3), got {self.points.shape}")

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class Dataset:
    """Washout/train/test split of one contiguous rescaled trajectory.

    Targets are the inputs shifted forward by exactly one sample:
    ``train_targets.points[k] == train_inputs.points[k + 1]`` (and the final
    training target is the first test input), likewise for the test split.
    """

    washout: Trajectory
    train_inputs: Trajectory
    train_targets: Trajectory
    test_inputs: Trajectory
    test_targets: Trajectory
    scaler: AffineScaler
    params: LorenzParams
    seed: int | tuple = field(default=0)

    def fit_inputs(self) -> np.ndarray:
        """Inputs for the training drive: washout then training segment."""
        return np.vstack([self.washout.points, self.train_inputs.points])

    def fit_targets(self) -> np.ndarray:
        """One-step-ahead targets aligned with ``fit_inputs()``."""
        return np.vstack(
            [
                self.washout.points[1:],
                self.train_inputs.points,
                self.train_targets.points[-1:],
            ]
        )


def build_dataset(
    params: LorenzParams,
    seed: int,
    k_washout: int,
    k_train: int,
    k_test: int,
) -> Dataset:
    """Generate one trajectory and split it for training.

    A random initial condition is drawn from the seeded generator, a
    ``DEFAULT_TRANSIENT`` of model time is discarded, and
    ``k_washout + k_train + k_test + 1`` samples are recorded. The scaler is
    fitted on the full generated sequence.
    """
    for name, value in (("k_washout", k_washout), ("k_train", k_train), ("k_test", k_test)):
        if value < 1:
            raise ValueError(f"{name} must be >= 1, got {value}")
    rng = np.random.default_rng(seed)
    initial = random_initial_state(rng)
    n_total = k_washout + k_train + k_test + 1
    raw = generate_raw(params, initial, n_total, DEFAULT_TRANSIENT)
    scaler = fit_scaler(raw)
    pts = scaler.transform(raw)
    dt = params.dt_sample

    def seg(lo, hi):
        return Trajectory(dt, pts[lo:hi], scaler)

    kw, kt = k_washout, k_train
    return Dataset(
        washout=seg(0, kw),
        train_inputs=seg(kw, kw + kt),
        train_targets=seg(kw + 1, kw + kt + 1),
        test_inputs=seg(kw + kt, kw + kt + k_test),
        test_targets=seg(kw + kt + 1, n_total),
        scaler=scaler,
        params=params,
        seed=seed,
    )


def build_prediction_trajectory(
    params: LorenzParams,
    seed: int,
    n_samples: int,
    scaler: AffineScaler,
    transient_time: float = DEFAULT_TRANSIENT,
) -> Trajectory:
    """Fresh random-start trajectory rescaled with an existing scaler.

    Used for the closed-loop prediction phase: the start is randomly
    distributed over the attractor while the embedding fitted on the
    training data is kept fixed.
    """
    rng = np.random.default_rng(seed)
    initial = random_initial_state(rng)
    raw = generate_raw(params, initial, n_samples, transient_time)
    return Trajectory(params.dt_sample, scaler.transform(raw), scaler)


def write_trajectory_csv(
    path,
    trajectory: Trajectory,
    params: LorenzParams,
    seed: int,
) -> Path:
    """Write samples as ``k,X,Y,Z`` and a JSON sidecar for the scaler.

    Values carry 17 significant digits so a parse recovers the exact
    doubles. The sidecar (same path with suffix ``.scaler.json``) stores the
    scaler bounds plus ``h``, ``dt_sample`` and ``seed``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "X", "Y", "Z"])
        for k, row in enumerate(trajectory.points):
            writer.writerow([k] + [f"{v:.17g}" for v in row])
    sidecar = path.with_suffix(".scaler.json")
    payload = trajectory.scaler.to_dict()
    payload.update({"h": params.h, "dt_sample": params.dt_sample, "seed": seed})
    sidecar.write_text(json.dumps(payload, indent=2) + "\n")
    return sidecar


def read_scaler_json(path) -> AffineScaler:
    """Load a scaler from a sidecar written by :func:`write_trajectory_csv`."""
    return AffineScaler.from_dict(json.loads(Path(path).read_text()))
