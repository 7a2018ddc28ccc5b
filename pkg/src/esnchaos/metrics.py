"""Evaluation measures for open- and closed-loop prediction quality.

Short-term accuracy is measured by per-component NRMSE (open loop) and the
valid prediction time (closed loop); long-term attractor reconstruction by a
phase-space cell-occupancy deviation, a smoothed power spectral density, and
a bounded/oscillatory/fixed-point classification of the autonomous run.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lorenz import LorenzParams, Trajectory, generate_raw

__all__ = [
    "LORENZ_LYAPUNOV",
    "VptResult",
    "ClassifyResult",
    "Psd",
    "nrmse",
    "vpt",
    "adev",
    "psd",
    "classify",
    "true_lorenz_vpt",
    "write_psd_csv",
]

# Largest Lyapunov exponent of the chaotic regime at the standard
# coefficients; used to express valid prediction times in Lyapunov units.
LORENZ_LYAPUNOV = 0.91


def _pair(targets, outputs) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(targets, dtype=float)
    o = np.asarray(outputs, dtype=float)
    if t.shape != o.shape:
        raise ValueError(f"shape mismatch: targets {t.shape} vs outputs {o.shape}")
    if t.shape[0] < 1:
        raise ValueError("need at least one sample")
    return t, o


def nrmse(targets, outputs) -> float:
    """Root mean squared error normalised by the population variance.

    Equals ``sqrt(sum((y - yhat)^2) / (K * var(y)))``; predicting the mean of
    the targets gives exactly 1.
    """
    t, o = _pair(np.asarray(targets, dtype=float).ravel(), np.asarray(outputs, dtype=float).ravel())
    variance = np.var(t)
    if variance == 0.0:
        raise ValueError("target variance is zero; NRMSE is undefined")
    return float(np.sqrt(np.mean((t - o) ** 2) / variance))


@dataclass(frozen=True)
class VptResult:
    """Valid prediction time in model-time and Lyapunov units."""

    t_vpt: float
    t_vpt_lyapunov: float
    crossed: bool


def vpt(targets, predictions, dt: float, threshold: float = 0.4,
        lyapunov_exponent: float = LORENZ_LYAPUNOV) -> VptResult:
    """Time until the normalised instantaneous error first reaches ``threshold``.

    The error at step k is ``|y(k) - yhat(k)|^2`` divided by the time average
    of ``|y - <y>|^2`` over the full target sequence. The reported time is
    ``dt`` times the first crossing index (0 if the first step already
    crosses); if the error never crosses, the full horizon ``dt * K`` is
    reported with ``crossed=False``.
    """
    t, p = _pair(targets, predictions)
    if t.ndim == 1:
        t = t[:, None]
        p = p[:, None]
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    centered = t - t.mean(axis=0)
    denom = float(np.mean(np.sum(centered**2, axis=1)))
    if denom == 0.0:
        raise ValueError("target sequence has zero variance; error norm undefined")
    delta = np.sum((t - p) ** 2, axis=1) / denom
    above = delta >= threshold
    if above.any():
        k = int(np.argmax(above))
        t_valid = dt * k
        crossed = True
    else:
        t_valid = dt * t.shape[0]
        crossed = False
    return VptResult(t_valid, t_valid * lyapunov_exponent, crossed)


def _visited_cells(points, cube: float) -> set:
    idx = np.floor(np.asarray(points, dtype=float) / cube)
    return {tuple(row) for row in idx.astype(np.int64)}


def adev(predicted, truth, cube: float = 0.1) -> int:
    """Count of phase-space cells visited by exactly one of two trajectories.

    Space is divided into axis-aligned cubes of side ``cube`` anchored at the
    origin; each trajectory marks the cells it passes through and the
    deviation is the size of the symmetric difference of the two marked
    sets. Zero means identical coverage.
    """
    if cube <= 0:
        raise ValueError(f"cube must be positive, got {cube}")
    p = np.asarray(predicted, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.ndim != 2 or t.ndim != 2 or p.shape[1] != t.shape[1]:
        raise ValueError("trajectories must be (K, d) arrays with matching d")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
        raise ValueError("trajectories must be finite")
    return len(_visited_cells(p, cube) ^ _visited_cells(t, cube))


@dataclass(frozen=True)
class Psd:
    """One-sided smoothed power spectral density."""

    frequencies: np.ndarray
    power: np.ndarray


def psd(series, dt: float, smooth_window: int = 20) -> Psd:
    """Hamming-windowed one-sided periodogram with a running-average smooth.

    The signal is multiplied by a Hamming window ``0.54 - 0.46 cos(2 pi n /
    (L - 1))``, transformed with the FFT, and the squared modulus is smoothed
    with a centred ``smooth_window``-point moving average truncated at the
    edges. Frequencies run from 0 up to the Nyquist frequency ``1/(2 dt)``.
    """
    z = np.asarray(series, dtype=float).ravel()
    if z.size < 64:
        raise ValueError(f"need at least 64 samples, got {z.size}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    length = z.size
    n = np.arange(length)
    window = 0.54 - 0.46 * np.cos(2.0 * np.pi * n / (length - 1))
    spectrum = np.abs(np.fft.rfft(window * z)) ** 2
    freqs = np.fft.rfftfreq(length, d=dt)

    half = smooth_window // 2
    csum = np.concatenate([[0.0], np.cumsum(spectrum)])
    idx = np.arange(spectrum.size)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + (smooth_window - half), spectrum.size)
    smoothed = (csum[hi] - csum[lo]) / (hi - lo)
    return Psd(freqs, smoothed)


def write_psd_csv(result: Psd, path) -> None:
    """Write a PSD as ``f,S`` rows with full double precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["f", "S"])
        for f, s in zip(result.frequencies, result.power):
            writer.writerow([f"{f:.17g}", f"{s:.17g}"])


@dataclass(frozen=True)
class ClassifyResult:
    """Boundedness and run-time classification of a closed-loop trajectory."""

    bounded: bool
    oscillatory_steps: int
    diverged_at: int | None
    horizon: int

    @property
    def oscillatory(self) -> bool:
        """Bounded and neither collapsed nor diverged within the horizon."""
        return self.bounded and self.oscillatory_steps == self.horizon


def classify(points, bound: float = 2.0, window: int = 100, eps: float = 1e-3,
             horizon: int | None = None) -> ClassifyResult:
    """Classify a trajectory as bounded and find when oscillation stops.

    bounded
        Every component finite and strictly below ``bound`` in magnitude for
        the whole horizon.
    fixed-point collapse
        First step whose trailing ``window`` samples have a per-component
        range below ``eps`` for all components; the oscillatory run time is
        the start of that flat window.
    ``oscillatory_steps`` is the horizon when neither happens. ``horizon``
    defaults to the trajectory length; pass the intended step count when
    classifying the partial output of a diverged run.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim != 2:
        raise ValueError(f"points must be (K, d), got shape {p.shape}")
    n = p.shape[0]
    full = n if horizon is None else int(horizon)
    if full < n:
        raise ValueError(f"horizon {full} shorter than trajectory length {n}")

    finite_rows = np.all(np.isfinite(p), axis=1)
    within = finite_rows & np.all(np.abs(p) < bound, axis=1)
    truncated = full > n
    if within.all() and not truncated:
        bounded = True
        diverged_at = None
    else:
        bounded = False
        diverged_at = int(np.argmin(within)) if not within.all() else n

    limit = diverged_at if diverged_at is not None else n
    collapse = None
    if limit >= window:
        segment = p[:limit]
        sliding = np.lib.stride_tricks.sliding_window_view(segment, window, axis=0)
        spans = sliding.max(axis=2) - sliding.min(axis=2)
        flat = np.all(spans < eps, axis=1)
        if flat.any():
            collapse = int(np.argmax(flat)) + window - 1

    if collapse is not None:
        oscillatory_steps = collapse - window + 1
    else:
        oscillatory_steps = limit
    return ClassifyResult(bounded, oscillatory_steps, diverged_at, full)


def true_lorenz_vpt(
    first_prediction,
    targets: Trajectory,
    params: LorenzParams,
    threshold: float = 0.4,
) -> VptResult:
    """Benchmark VPT of the true flow restarted from the first prediction.

    The first closed-loop output is mapped back to raw units, used as the
    initial condition of the exact equations, integrated over the target
    horizon, rescaled, and scored with :func:`vpt` against the same targets.
    This bounds the VPT attainable given the one-step prediction error.
    """
    start = np.asarray(first_prediction, dtype=float)
    if start.shape != (3,):
        raise ValueError(f"first_prediction must be a 3-vector, got shape {start.shape}")
    raw0 = targets.scaler.inverse(start)
    raw = generate_raw(params, raw0, len(targets), transient_time=0.0)
    rescaled = targets.scaler.transform(raw)
    return vpt(targets.points, rescaled, targets.dt, threshold)
