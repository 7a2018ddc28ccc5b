"""Reservoir construction, training, and open/closed-loop operation.

A reservoir is a tanh network ``x(k+1) = tanh(coupling @ x(k) + input_weights
@ u(k+1))`` whose coupling matrix comes from one of three topologies
(uncoupled, ring, random), rescaled to a target spectral radius. Only the
linear readout is trained (ridge regression on harvested states plus a bias
column). Feeding the readout back as the next input turns the trained system
into an autonomous map ``x(k+1) = tanh(autonomous_coupling @ x(k) + bias)``
whose coupling is an exact algebraic function of the trained weights.

:class:`EsnForecaster` wraps the pieces in a scikit-learn style estimator
(``fit``/``predict``/``get_params``) so the pipeline composes with the usual
ecosystem tooling.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from . import _kernels
from .linalg import ridge_solve, spectral_radius

__all__ = [
    "TOPOLOGIES",
    "build_coupling",
    "build_input_weights",
    "Reservoir",
    "train_readout",
    "predict_open_loop",
    "build_autonomous",
    "run_closed_loop",
    "TrainedModel",
    "EsnForecaster",
]

TOPOLOGIES = ("uncoupled", "ring", "random")


def _check_topology(topology: str) -> str:
    if topology not in TOPOLOGIES:
        raise ValueError(f"topology must be one of {TOPOLOGIES}, got {topology!r}")
    return topology


def _as_series(x, name: str, n_cols: int | None = None) -> np.ndarray:
    """Validate a (K, d) float array of finite values."""
    arr = np.ascontiguousarray(np.asarray(x, dtype=float))
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise ValueError(f"{name} must have {n_cols} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _ring_matrix(n_nodes: int) -> np.ndarray:
    """Cyclic shift matrix: ones one below the diagonal plus the corner."""
    m = np.zeros((n_nodes, n_nodes))
    m[0, n_nodes - 1] = 1.0
    for i in range(1, n_nodes):
        m[i, i - 1] = 1.0
    return m


def build_coupling(topology: str, n_nodes: int, rho: float, seed=None) -> np.ndarray:
    """Coupling matrix of the requested topology with spectral radius ``rho``.

    uncoupled
        ``rho`` times the identity (pure self-coupling).
    ring
        ``rho`` times the cyclic shift matrix (unidirectional ring).
    random
        Dense entries drawn uniformly on [0, 1) from the seeded generator,
        then scaled so the spectral radius equals ``rho``.

    ``rho == 0`` returns the exact zero matrix for every topology, the
    memoryless limit in which all three coincide.
    """
    _check_topology(topology)
    if n_nodes < 1:
        raise ValueError(f"n_nodes must be >= 1, got {n_nodes}")
    if rho < 0:
        raise ValueError(f"rho must be >= 0, got {rho}")
    if rho == 0.0:
        return np.zeros((n_nodes, n_nodes))
    if topology == "uncoupled":
        return rho * np.eye(n_nodes)
    if topology == "ring":
        return rho * _ring_matrix(n_nodes)
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    for attempt, child in enumerate(seq.spawn(8)):
        base = np.random.default_rng(child).random((n_nodes, n_nodes))
        radius = spectral_radius(base)
        if radius > 0.0:
            if attempt > 0:
                warnings.warn(
                    f"random coupling draw needed {attempt + 1} attempts to "
                    "obtain a nonzero spectral radius"
                )
            return (rho / radius) * base
    raise RuntimeError("random coupling drew a zero spectral radius repeatedly")


def build_input_weights(n_nodes: int, n_inputs: int, input_scale: float, seed=None) -> np.ndarray:
    """Input weights drawn i.i.d. uniform on [0, input_scale].

    Positive weights keep the nodes on a common operating branch of the
    tanh, which is what makes the spectral radius of the trained autonomous
    coupling grow cleanly with the reservoir's own spectral radius; a
    sign-symmetric draw destroys that trend.
    """
    if n_nodes < 1 or n_inputs < 1:
        raise ValueError("n_nodes and n_inputs must be >= 1")
    if input_scale < 0:
        raise ValueError(f"input_scale must be >= 0, got {input_scale}")
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, input_scale, size=(n_nodes, n_inputs))


class Reservoir:
    """Mutable tanh state machine over fixed coupling and input weights.

    Instances are cheap single-threaded state holders; run many in parallel
    rather than sharing one across threads.
    """

    def __init__(self, coupling: np.ndarray, input_weights: np.ndarray):
        coupling = np.ascontiguousarray(np.asarray(coupling, dtype=float))
        input_weights = np.ascontiguousarray(np.asarray(input_weights, dtype=float))
        if coupling.ndim != 2 or coupling.shape[0] != coupling.shape[1]:
            raise ValueError(f"coupling must be square, got shape {coupling.shape}")
        if input_weights.ndim != 2 or input_weights.shape[0] != coupling.shape[0]:
            raise ValueError(
                "input_weights must have one row per node, got shape "
                f"{input_weights.shape} for {coupling.shape[0]} nodes"
            )
        self.coupling = coupling
        self.input_weights = input_weights
        self.state = np.zeros(coupling.shape[0])

    @property
    def n_nodes(self) -> int:
        return self.coupling.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.input_weights.shape[1]

    def reset(self) -> None:
        self.state = np.zeros(self.n_nodes)

    def step(self, inputs) -> np.ndarray:
        """Advance one step with the given input vector; returns the new state."""
        u = np.asarray(inputs, dtype=float).reshape(1, self.n_inputs)
        states = _kernels.esn_drive(self.coupling, self.input_weights, self.state, u)
        return states[0]

    def drive(self, inputs) -> np.ndarray:
        """Advance over a (K, p) input sequence; returns the K visited states."""
        u = _as_series(inputs, "inputs", self.n_inputs)
        return _kernels.esn_drive(self.coupling, self.input_weights, self.state, u)

    def harvest(self, inputs, n_discard: int) -> np.ndarray:
        """State matrix for training: drive, drop the first ``n_discard`` rows,
        append the bias column of ones.

        The caller is expected to start from a freshly reset state; the
        discarded washout is what makes the retained rows independent of it.
        """
        u = _as_series(inputs, "inputs", self.n_inputs)
        if not 0 <= n_discard < u.shape[0]:
            raise ValueError(
                f"n_discard must be in [0, {u.shape[0]}), got {n_discard}"
            )
        states = _kernels.esn_drive(self.coupling, self.input_weights, self.state, u)
        kept = states[n_discard:]
        return np.hstack([kept, np.ones((kept.shape[0], 1))])


def train_readout(state_matrix, targets, ridge_lambda: float) -> np.ndarray:
    """Ridge-regress targets onto harvested states (bias column included).

    Column i of the result holds the readout weights for target component i;
    the final entry of each column is its bias weight.
    """
    s = _as_series(state_matrix, "state_matrix")
    y = _as_series(targets, "targets")
    if s.shape[0] != y.shape[0]:
        raise ValueError(
            f"state_matrix has {s.shape[0]} rows but targets has {y.shape[0]}"
        )
    return ridge_solve(s, y, ridge_lambda)


def predict_open_loop(reservoir: Reservoir, readout, inputs) -> np.ndarray:
    """Drive with true inputs, emitting the readout after every update."""
    w = _as_series(readout, "readout")
    if w.shape[0] != reservoir.n_nodes + 1:
        raise ValueError(
            f"readout must have {reservoir.n_nodes + 1} rows, got {w.shape[0]}"
        )
    states = reservoir.drive(inputs)
    return _kernels.apply_readout(states, np.ascontiguousarray(w))


def build_autonomous(coupling, input_weights, readout) -> tuple[np.ndarray, np.ndarray]:
    """Closed-loop coupling matrix and bias for output feedback.

    With ``core`` the readout minus its bias row, the next-step argument
    ``coupling @ x + input_weights @ ([x, 1] @ readout)`` rearranges exactly to
    ``(coupling + input_weights @ core.T) @ x + input_weights @ bias_row``;
    this returns that matrix and bias vector. Requires as many readout
    columns as input channels (the output is fed back as the input).
    """
    w_int = np.asarray(coupling, dtype=float)
    w_in = np.asarray(input_weights, dtype=float)
    w = np.asarray(readout, dtype=float)
    n = w_int.shape[0]
    if w_int.shape != (n, n):
        raise ValueError(f"coupling must be square, got shape {w_int.shape}")
    if w_in.shape[0] != n:
        raise ValueError("input_weights rows must match coupling size")
    if w.shape != (n + 1, w_in.shape[1]):
        raise ValueError(
            "readout must have shape (n_nodes + 1, n_inputs) for output "
            f"feedback, got {w.shape} with {w_in.shape[1]} input channels"
        )
    core = w[:-1, :]
    autonomous = w_int + w_in @ core.T
    bias = w_in @ w[-1, :]
    return autonomous, bias


@dataclass
class TrainedModel:
    """A trained reservoir plus its derived autonomous system."""

    topology: str
    rho: float
    ridge_lambda: float
    coupling: np.ndarray
    input_weights: np.ndarray
    readout: np.ndarray
    autonomous_coupling: np.ndarray
    autonomous_bias: np.ndarray
    rho_autonomous: float
    seeds: dict

    @property
    def n_nodes(self) -> int:
        return self.coupling.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.input_weights.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.readout.shape[1]

    @classmethod
    def from_weights(
        cls,
        topology: str,
        rho: float,
        ridge_lambda: float,
        coupling,
        input_weights,
        readout,
        seeds: dict | None = None,
    ) -> "TrainedModel":
        autonomous, bias = build_autonomous(coupling, input_weights, readout)
        return cls(
            topology=topology,
            rho=float(rho),
            ridge_lambda=float(ridge_lambda),
            coupling=np.asarray(coupling, dtype=float),
            input_weights=np.asarray(input_weights, dtype=float),
            readout=np.asarray(readout, dtype=float),
            autonomous_coupling=autonomous,
            autonomous_bias=bias,
            rho_autonomous=spectral_radius(autonomous),
            seeds=dict(seeds or {}),
        )

    def to_json(self) -> str:
        """Serialise with full float precision (shortest round-trip repr)."""
        payload = {
            "M": self.n_nodes,
            "p": self.n_inputs,
            "q": self.n_outputs,
            "topology": self.topology,
            "rho_R": self.rho,
            "lambda": self.ridge_lambda,
            "seeds": self.seeds,
            "W_int": self.coupling.tolist(),
            "W_in": self.input_weights.tolist(),
            "W": self.readout.tolist(),
            "W_a": self.autonomous_coupling.tolist(),
            "b": self.autonomous_bias.tolist(),
            "rho_a": self.rho_autonomous,
        }
        return json.dumps(payload, indent=2)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        d = json.loads(text)
        return cls(
            topology=d["topology"],
            rho=float(d["rho_R"]),
            ridge_lambda=float(d["lambda"]),
            coupling=np.asarray(d["W_int"], dtype=float),
            input_weights=np.asarray(d["W_in"], dtype=float),
            readout=np.asarray(d["W"], dtype=float),
            autonomous_coupling=np.asarray(d["W_a"], dtype=float),
            autonomous_bias=np.asarray(d["b"], dtype=float),
            rho_autonomous=float(d["rho_a"]),
            seeds=dict(d.get("seeds", {})),
        )

    @classmethod
    def load(cls, path) -> "TrainedModel":
        return cls.from_json(Path(path).read_text())


def run_closed_loop(model: TrainedModel, state: np.ndarray, n_steps: int):
    """Iterate the autonomous system, emitting the readout each step.

    ``state`` is advanced in place from the synchronised value the caller
    provides. The first output is the readout of that state, i.e. the same
    one-step prediction open-loop operation would make from the last
    synchronisation input.

    Returns ``(outputs, diverged_at)`` where ``diverged_at`` is None on a
    clean run, else the index after which the state went non-finite;
    divergence is a measured outcome, not an exception, and the partial
    outputs are returned.
    """
    if n_steps < 0:
        raise ValueError(f"n_steps must be >= 0, got {n_steps}")
    state = np.ascontiguousarray(np.asarray(state, dtype=float))
    if state.shape != (model.n_nodes,):
        raise ValueError(f"state must have shape ({model.n_nodes},), got {state.shape}")
    outputs, diverged = _kernels.esn_closed_loop(
        np.ascontiguousarray(model.autonomous_coupling),
        np.ascontiguousarray(model.autonomous_bias),
        np.ascontiguousarray(model.readout),
        state,
        int(n_steps),
    )
    return outputs, (None if diverged < 0 else int(diverged))


class EsnForecaster(BaseEstimator):
    """One-step-ahead echo-state forecaster with a ridge readout.

    Parameters
    ----------
    n_nodes : int, default=20
        Reservoir size.
    topology : {'uncoupled', 'ring', 'random'}, default='uncoupled'
        Coupling matrix structure.
    spectral_radius : float, default=0.1
        Target spectral radius of the coupling matrix (0 gives the
        memoryless limit).
    input_scale : float, default=1.45
        Upper end of the uniform input-weight distribution (draws are on
        ``[0, input_scale]``).
    ridge_lambda : float, default=1e-6
        Readout regularisation strength.
    washout : int, default=10000
        Leading samples of the training drive whose responses are discarded.
    seed : int, default=0
        Seed for the coupling and input-weight draws (two independent
        substreams are derived from it).

    Attributes
    ----------
    coupling_, input_weights_, readout_ : ndarray
        Fitted weight matrices.
    reservoir_ : Reservoir
        Holds the network state; after ``fit`` it sits at the end of the
        training sequence so ``predict`` continues seamlessly.
    model_ : TrainedModel or None
        Autonomous (closed-loop) system; built when the number of targets
        matches the number of inputs.

    Notes
    -----
    ``predict`` is deliberately stateful, as usual for sequential
    forecasters: consecutive calls continue from the current network state.
    """

    def __init__(
        self,
        n_nodes: int = 20,
        topology: str = "uncoupled",
        spectral_radius: float = 0.1,
        input_scale: float = 1.45,
        ridge_lambda: float = 1e-6,
        washout: int = 10000,
        seed=0,
    ):
        self.n_nodes = n_nodes
        self.topology = topology
        self.spectral_radius = spectral_radius
        self.input_scale = input_scale
        self.ridge_lambda = ridge_lambda
        self.washout = washout
        self.seed = seed

    def _seed_sequences(self) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
        seq = (
            self.seed
            if isinstance(self.seed, np.random.SeedSequence)
            else np.random.SeedSequence(self.seed)
        )
        coupling_seq, input_seq = seq.spawn(2)
        return coupling_seq, input_seq

    def fit(self, X, y) -> "EsnForecaster":
        """Train the readout on an input sequence and one-step targets.

        ``X`` is the full (K, p) drive including washout; ``y`` holds the
        aligned targets (``y[k]`` is the desired output after input
        ``X[k]``). The first ``washout`` rows of both are discarded before
        the regression.
        """
        X = _as_series(X, "X")
        y = _as_series(y, "y")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if not 0 <= self.washout < X.shape[0]:
            raise ValueError(
                f"washout must be in [0, {X.shape[0]}), got {self.washout}"
            )
        _check_topology(self.topology)

        coupling_seq, input_seq = self._seed_sequences()
        self.coupling_ = build_coupling(
            self.topology, self.n_nodes, self.spectral_radius, coupling_seq
        )
        self.input_weights_ = build_input_weights(
            self.n_nodes, X.shape[1], self.input_scale, input_seq
        )
        self.reservoir_ = Reservoir(self.coupling_, self.input_weights_)
        states = self.reservoir_.harvest(X, n_discard=self.washout)
        self.readout_ = train_readout(states, y[self.washout :], self.ridge_lambda)
        self.state_matrix_shape_ = states.shape

        if y.shape[1] == X.shape[1]:
            self.model_ = TrainedModel.from_weights(
                self.topology,
                self.spectral_radius,
                self.ridge_lambda,
                self.coupling_,
                self.input_weights_,
                self.readout_,
                seeds={"weights": _seed_entropy(self.seed)},
            )
        else:
            self.model_ = None
        return self

    def _check_fitted(self):
        if not hasattr(self, "readout_"):
            raise RuntimeError("this EsnForecaster instance is not fitted yet")

    def predict(self, X) -> np.ndarray:
        """Open-loop outputs for a (K, p) input sequence.

        The reservoir continues from its current state, so calling this with
        the samples that directly follow the training sequence needs no
        resynchronisation.
        """
        self._check_fitted()
        return predict_open_loop(self.reservoir_, self.readout_, X)

    def forecast(self, n_steps: int, sync_inputs=None):
        """Closed-loop (autonomous) forecast of ``n_steps`` outputs.

        If ``sync_inputs`` is given, the state is reset to zero and driven
        with those true samples first so the forecast starts aligned with
        them. Returns ``(outputs, diverged_at)`` as in
        :func:`run_closed_loop`.
        """
        self._check_fitted()
        if self.model_ is None:
            raise RuntimeError(
                "closed-loop operation needs as many targets as inputs "
                "(the output is fed back as the next input)"
            )
        if sync_inputs is not None:
            self.reservoir_.reset()
            self.reservoir_.drive(sync_inputs)
        return run_closed_loop(self.model_, self.reservoir_.state, n_steps)


def _seed_entropy(seed) -> list | int | None:
    """JSON-friendly description of a seed or SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        entropy = seed.entropy
        if isinstance(entropy, (list, tuple)):
            return [int(v) for v in entropy]
        return int(entropy) if entropy is not None else None
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    return None
