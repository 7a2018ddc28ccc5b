"""Small echo-state-network reservoirs for chaotic attractor reconstruction.

Builds 20-node tanh reservoirs with uncoupled, ring, or random coupling,
trains a ridge readout for one-step-ahead prediction of the Lorenz-63
system, runs the trained network as an autonomous surrogate, and measures
short-term accuracy (NRMSE, valid prediction time) and long-term attractor
reconstruction (boundedness, cell-occupancy deviation, power spectra,
spectral radius of the trained system) over seeded parameter sweeps.
"""

__version__ = "0.1.0"

from .lorenz import (  # noqa: E402
    AffineScaler,
    Dataset,
    IntegrationDiverged,
    LorenzParams,
    Trajectory,
    build_dataset,
    build_prediction_trajectory,
    fit_scaler,
    generate_raw,
    lorenz_derivative,
    rk4_step,
)
from .linalg import SolveError, eigen_magnitudes, ridge_solve, spectral_radius  # noqa: E402
from .metrics import (  # noqa: E402
    LORENZ_LYAPUNOV,
    ClassifyResult,
    Psd,
    VptResult,
    adev,
    classify,
    nrmse,
    psd,
    true_lorenz_vpt,
    vpt,
)
from .reservoir import (  # noqa: E402
    TOPOLOGIES,
    EsnForecaster,
    Reservoir,
    TrainedModel,
    build_autonomous,
    build_coupling,
    build_input_weights,
    predict_open_loop,
    run_closed_loop,
    train_readout,
)
from .harness import (  # noqa: E402
    MetricsRecord,
    RunConfig,
    SummaryRow,
    aggregate,
    export,
    run_realization,
    run_sweep,
)

__all__ = [
    "__version__",
    "AffineScaler",
    "ClassifyResult",
    "Dataset",
    "EsnForecaster",
    "IntegrationDiverged",
    "LORENZ_LYAPUNOV",
    "LorenzParams",
    "MetricsRecord",
    "Psd",
    "Reservoir",
    "RunConfig",
    "SolveError",
    "SummaryRow",
    "TOPOLOGIES",
    "TrainedModel",
    "Trajectory",
    "VptResult",
    "adev",
    "aggregate",
    "build_autonomous",
    "build_coupling",
    "build_dataset",
    "build_input_weights",
    "build_prediction_trajectory",
    "classify",
    "eigen_magnitudes",
    "export",
    "fit_scaler",
    "generate_raw",
    "lorenz_derivative",
    "nrmse",
    "predict_open_loop",
    "psd",
    "ridge_solve",
    "rk4_step",
    "run_closed_loop",
    "run_realization",
    "run_sweep",
    "spectral_radius",
    "train_readout",
    "true_lorenz_vpt",
    "vpt",
]
