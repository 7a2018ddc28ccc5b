"""Independent oracles shared by the unit and acceptance tests.

These deliberately avoid the library code paths they are used to check:
the divergence-rate estimator only consumes generated trajectories, the DFT
oracle is a direct O(L^2) sum, and the feedback simulator iterates the base
update with explicit output feedback instead of the precomputed autonomous
coupling.
"""

import numpy as np

from esnchaos.lorenz import LorenzParams, fit_scaler, generate_raw, random_initial_state
from esnchaos.metrics import adev


def benettin_lyapunov(params=LorenzParams(), n_intervals=5000, d0=1e-9, seed=1):
    """Largest Lyapunov exponent from two-trajectory log divergence.

    A reference trajectory and a perturbed copy are advanced one sampling
    interval at a time; after each interval the log growth of their
    separation is accumulated and the perturbation is rescaled back to d0.
    """
    rng = np.random.default_rng(seed)
    start = generate_raw(params, random_initial_state(rng), 1, 100.0)[0]
    reference = start.copy()
    perturbed = reference + np.array([d0, 0.0, 0.0])
    total = 0.0
    for _ in range(n_intervals):
        reference = generate_raw(params, reference, 2, 0.0)[1]
        perturbed = generate_raw(params, perturbed, 2, 0.0)[1]
        separation = float(np.linalg.norm(perturbed - reference))
        total += np.log(separation / d0)
        perturbed = reference + (perturbed - reference) * (d0 / separation)
    return total / (n_intervals * params.dt_sample)


def naive_dft(signal):
    """Direct O(L^2) discrete Fourier transform."""
    z = np.asarray(signal, dtype=float)
    length = z.size
    n = np.arange(length)
    return np.array([np.sum(z * np.exp(-2j * np.pi * k * n / length)) for k in range(length)])


def feedback_outputs(model, state, n_steps):
    """Explicit output-feedback simulation of the base reservoir update.

    The closed-loop implementation iterates the precomputed autonomous
    coupling; this oracle instead feeds each emitted output back through the
    original coupling and input weights.
    """
    x = np.asarray(state, dtype=float).copy()
    outputs = np.empty((n_steps, model.readout.shape[1]))
    for k in range(n_steps):
        y = np.concatenate([x, [1.0]]) @ model.readout
        outputs[k] = y
        x = np.tanh(model.coupling @ x + model.input_weights @ y)
    return outputs


def reference_adev(seed_family, n_pairs=8, n_samples=5000, cube=0.1):
    """Median cell deviation between pairs of independent true trajectories."""
    params = LorenzParams()
    values = []
    for i in range(n_pairs):
        rng = np.random.default_rng((seed_family, i))
        first = generate_raw(params, random_initial_state(rng), n_samples, 100.0)
        second = generate_raw(params, random_initial_state(rng), n_samples, 100.0)
        scaler = fit_scaler(first)
        values.append(adev(scaler.transform(second), scaler.transform(first), cube))
    return float(np.median(values)), values
