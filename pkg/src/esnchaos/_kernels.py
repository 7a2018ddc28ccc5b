"""Compiled inner loops. Internal module, no public API.

All kernels are float64, run without fastmath so results are bit-reproducible,
and release the GIL so independent realizations can run on worker threads.
"""

from __future__ import annotations

import math

import numba
import numpy as np

_JIT = dict(cache=True, nogil=True)


@numba.njit(**_JIT)
def rk4_single(x, y, z, h, c1, c2, c3):
    """One classical Runge-Kutta step of the three-variable flow."""
    k1x = c1 * (y - x)
    k1y = x * (c2 - z) - y
    k1z = x * y - c3 * z

    ax = x + 0.5 * h * k1x
    ay = y + 0.5 * h * k1y
    az = z + 0.5 * h * k1z
    k2x = c1 * (ay - ax)
    k2y = ax * (c2 - az) - ay
    k2z = ax * ay - c3 * az

    bx = x + 0.5 * h * k2x
    by = y + 0.5 * h * k2y
    bz = z + 0.5 * h * k2z
    k3x = c1 * (by - bx)
    k3y = bx * (c2 - bz) - by
    k3z = bx * by - c3 * bz

    cx = x + h * k3x
    cy = y + h * k3y
    cz = z + h * k3z
    k4x = c1 * (cy - cx)
    k4y = cx * (c2 - cz) - cy
    k4z = cx * cy - c3 * cz

    nx = x + h * (k1x + 2.0 * k2x + 2.0 * k3x + k4x) / 6.0
    ny = y + h * (k1y + 2.0 * k2y + 2.0 * k3y + k4y) / 6.0
    nz = z + h * (k1z + 2.0 * k2z + 2.0 * k3z + k4z) / 6.0
    return nx, ny, nz


@numba.njit(**_JIT)
def lorenz_orbit(x, y, z, h, steps_per_sample, n_samples, n_transient_steps,
                 c1, c2, c3, bound):
    """Integrate, drop the transient, record every ``steps_per_sample`` steps.

    Returns ``(samples, status)`` where samples has shape ``(n_samples, 3)``
    and status is -1 on success or the index of the first sample at which a
    component exceeded ``bound`` or went non-finite (remaining rows are NaN).
    """
    out = np.full((n_samples, 3), np.nan)
    for _ in range(n_transient_steps):
        x, y, z = rk4_single(x, y, z, h, c1, c2, c3)
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)) or (
        abs(x) > bound or abs(y) > bound or abs(z) > bound
    ):
        return out, 0
    out[0, 0] = x
    out[0, 1] = y
    out[0, 2] = z
    for i in range(1, n_samples):
        for _ in range(steps_per_sample):
            x, y, z = rk4_single(x, y, z, h, c1, c2, c3)
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)) or (
            abs(x) > bound or abs(y) > bound or abs(z) > bound
        ):
            return out, i
        out[i, 0] = x
        out[i, 1] = y
        out[i, 2] = z
    return out, -1


@numba.njit(**_JIT)
def esn_drive(coupling, input_weights, state, inputs):
    """Drive the tanh reservoir over an input sequence.

    ``state`` (length M) is updated in place to the final state; the returned
    array holds the state after each of the ``len(inputs)`` updates.
    """
    n = inputs.shape[0]
    m = coupling.shape[0]
    p = input_weights.shape[1]
    states = np.empty((n, m))
    new = np.empty(m)
    for t in range(n):
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += coupling[i, j] * state[j]
            for j in range(p):
                acc += input_weights[i, j] * inputs[t, j]
            new[i] = math.tanh(acc)
        for i in range(m):
            state[i] = new[i]
            states[t, i] = new[i]
    return states


@numba.njit(**_JIT)
def apply_readout(states, readout):
    """Outputs ``[state, 1] @ readout`` for each row of ``states``.

    ``readout`` has shape (M+1, q); its last row holds the bias weights.
    """
    n = states.shape[0]
    m = states.shape[1]
    q = readout.shape[1]
    out = np.empty((n, q))
    for t in range(n):
        for i in range(q):
            acc = 0.0
            for j in range(m):
                acc += states[t, j] * readout[j, i]
            out[t, i] = acc + readout[m, i]
    return out


@numba.njit(**_JIT)
def esn_closed_loop(autonomous, bias, readout, state, n_steps):
    """Run the trained autonomous system, emitting the readout each step.

    The output for step k is read from the state *before* the k-th update, so
    the first output equals the one-step open-loop prediction from the state
    passed in. Returns ``(outputs, diverged_at)`` with diverged_at -1 on a
    clean run, else the index of the first step whose updated state was
    non-finite (outputs beyond it are NaN).
    """
    m = autonomous.shape[0]
    q = readout.shape[1]
    out = np.full((n_steps, q), np.nan)
    new = np.empty(m)
    for k in range(n_steps):
        for i in range(q):
            acc = 0.0
            for j in range(m):
                acc += state[j] * readout[j, i]
            out[k, i] = acc + readout[m, i]
        for i in range(m):
            acc = bias[i]
            for j in range(m):
                acc += autonomous[i, j] * state[j]
            new[i] = math.tanh(acc)
        ok = True
        for i in range(m):
            if not math.isfinite(new[i]):
                ok = False
        if not ok:
            return out[: k + 1], k
        for i in range(m):
            state[i] = new[i]
    return out, -1
