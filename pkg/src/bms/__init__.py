"""Moving-horizon state estimation from binary threshold measurements.

Discrete-time linear systems observed through banks of one-bit sensors:
deterministic least-squares and piecewise-quadratic estimators, a
Bernoulli-likelihood MAP estimator, a two-stage fast variant for
high-dimensional fields, a P1 finite-element diffusion test bed, and a
benchmark driver with a command line front end.
"""

from ._backend import BACKEND, USE_NUMBA
from .bench import (
    RunResult,
    ScenarioConfig,
    emit,
    ledger_report,
    noise_assisted_sweep,
    observability_report,
    run_scenario,
    sweep,
)
from .deterministic import (
    ConstraintPolyhedron,
    MheWeights,
    MovingHorizonFilter,
    QuadraticForm,
    StabilityLedger,
    assemble_lsmhe,
    build_constraints,
    estimate_phi_bar,
    pwmhe_cost_grad,
    solve_lsmhe,
    solve_lsmhe_window,
    solve_pwmhe,
    stability_ledger,
    tune_epsilon,
)
from .errors import (
    BmsError,
    ConditioningError,
    ConfigError,
    ConvergenceError,
    InfeasibleError,
    LocationError,
    MeshError,
    ModelError,
    ObservabilityError,
    WeightError,
)
from .fastmap import (
    FastFilter,
    LocalModel,
    PseudoMeasurementSet,
    global_fuse,
    local_map_step,
)
from .fem import (
    FemOperators,
    FieldModel,
    TriMesh,
    assemble,
    discretize_field,
    generate_lshape_mesh,
    load_mesh,
    save_mesh,
    sensor_rows,
    simulate_ground_truth,
)
from .model import (
    BinarySensor,
    BoundedSets,
    ContinuousModel,
    LinearSystem,
    MheWindow,
    build_oscillator_network,
    detect_switchings,
    discretize,
    make_window,
    observability_matrix,
    observability_measure,
    sense,
    step,
)
from .probabilistic import (
    GaussianPriors,
    MapFilter,
    MapWindow,
    log_tail,
    map_cost_grad,
    sensor_loglik,
    solve_mh_map,
    tail_cdf,
)
from .solvers import (
    SolveReport,
    barrier_qp,
    block_solve,
    cholesky_solve,
    child_seeds,
    quasi_newton_min,
    seeded_rng,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "USE_NUMBA",
    "BinarySensor",
    "BmsError",
    "BoundedSets",
    "ConditioningError",
    "ConfigError",
    "ConstraintPolyhedron",
    "ContinuousModel",
    "ConvergenceError",
    "FastFilter",
    "FemOperators",
    "FieldModel",
    "GaussianPriors",
    "InfeasibleError",
    "LinearSystem",
    "LocalModel",
    "LocationError",
    "MapFilter",
    "MapWindow",
    "MeshError",
    "MheWeights",
    "MheWindow",
    "ModelError",
    "MovingHorizonFilter",
    "ObservabilityError",
    "PseudoMeasurementSet",
    "QuadraticForm",
    "RunResult",
    "ScenarioConfig",
    "SolveReport",
    "StabilityLedger",
    "TriMesh",
    "WeightError",
    "assemble",
    "assemble_lsmhe",
    "barrier_qp",
    "block_solve",
    "build_constraints",
    "build_oscillator_network",
    "cholesky_solve",
    "child_seeds",
    "detect_switchings",
    "discretize",
    "discretize_field",
    "emit",
    "estimate_phi_bar",
    "generate_lshape_mesh",
    "global_fuse",
    "ledger_report",
    "load_mesh",
    "local_map_step",
    "log_tail",
    "make_window",
    "map_cost_grad",
    "noise_assisted_sweep",
    "observability_matrix",
    "observability_measure",
    "observability_report",
    "pwmhe_cost_grad",
    "quasi_newton_min",
    "run_scenario",
    "save_mesh",
    "seeded_rng",
    "sense",
    "sensor_loglik",
    "sensor_rows",
    "simulate_ground_truth",
    "solve_lsmhe",
    "solve_lsmhe_window",
    "solve_mh_map",
    "solve_pwmhe",
    "stability_ledger",
    "step",
    "sweep",
    "tail_cdf",
    "tune_epsilon",
]
