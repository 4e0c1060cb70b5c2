"""Benchmark scenarios, Monte Carlo runs, parameter sweeps, and reports.

Five scenario kinds are wired here:

* hydraulic: a three-state tank loop with one level sensor;
* oscillator: two coupled masses observed through one position sensor;
* oscillator-network: six such oscillators diffusively coupled;
* diffusion-field: the L-shape field estimated on the coarse mesh from
  binary readings of the fine-mesh ground truth;
* fast-field: the same field run through the two-stage fast filter.

Each run draws per-trial seeds from one root seed, so sweeps reuse the
same noise streams across grid values.  Reports are plain CSV/JSON text
written deterministically; only measured wall times vary between runs.
"""

import json
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import deterministic, fem, kernels
from .deterministic import (
    MheWeights,
    MovingHorizonFilter,
    estimate_phi_bar,
    stability_ledger,
    tune_epsilon,
)
from .errors import ConfigError, ConvergenceError
from .fastmap import FastFilter, LocalModel
from .model import (
    BinarySensor,
    BoundedSets,
    ContinuousModel,
    LinearSystem,
    build_oscillator_network,
    detect_switchings,
    discretize,
    sense,
)
from .probabilistic import GaussianPriors, MapFilter
from .solvers import child_seeds, seeded_rng

KINDS = (
    "hydraulic",
    "oscillator",
    "oscillator-network",
    "diffusion-field",
    "fast-field",
)
ESTIMATORS = ("lsmhe", "pwmhe", "pwmhe-constrained", "mhmap", "fast-mhmap")
SWEEP_AXES = ("N", "tau", "r", "gamma")

RMSE_HEADER = "step,rmse,rmse_normalized,wall_ms"

# Six-site coupling graph.  With unit edge weights the Laplacian peak
# eigenvalue is 5.514137, so the network of undamped oscillators stays
# synchronized for couplings below 2 cos(omega_2 Ts) / 5.514137 = 0.31625;
# the default gamma = 0.02 sits far inside that region.
NETWORK_EDGES = (
    (0, 2),
    (0, 3),
    (0, 4),
    (0, 5),
    (1, 2),
    (1, 3),
    (1, 4),
)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a run needs; unset fields take per-kind defaults."""

    kind: str
    estimator: str
    N: int = None
    duration: int = None
    trials: int = None
    seed: int = 0
    P: float = None
    Q: float = None
    R: float = None
    epsilon: float = None
    tau: tuple = None
    noise_bound: float = None
    noise_variance: float = None
    gamma: float = 0.02
    n_sensors: int = 20
    local_order: int = 0
    local_q: float = 1e-2
    local_window: int = None
    compute_delta: bool = True
    rho_X: float = None
    rho_U: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        d = dict(_KIND_DEFAULTS[self.kind])
        for name in (
            "N",
            "duration",
            "trials",
            "P",
            "Q",
            "R",
            "epsilon",
            "tau",
            "noise_bound",
            "noise_variance",
        ):
            if getattr(self, name) is None and name in d:
                object.__setattr__(self, name, d[name])
        if self.tau is not None and not isinstance(self.tau, tuple):
            object.__setattr__(self, "tau", (float(self.tau),))
        for name in ("N", "duration", "trials"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.N >= self.duration:
            raise ConfigError("the window must be shorter than the run")
        if self.estimator == "fast-mhmap" and self.kind not in (
            "fast-field",
            "diffusion-field",
        ):
            raise ConfigError("the fast estimator is wired for the field kinds")


_KIND_DEFAULTS = {
    "hydraulic": dict(
        N=5,
        duration=800,
        trials=10,
        P=1e6,
        Q=1e-8,
        R=1e6,
        tau=(0.17,),
        noise_bound=0.01,
        noise_variance=1.0,
        epsilon=None,
    ),
    "oscillator": dict(
        N=100,
        duration=500,
        trials=10,
        P=1.0,
        Q=1.0,
        R=1.0,
        epsilon=1e-5,
        tau=(0.5,),
        noise_bound=0.05,
        noise_variance=1.0,
    ),
    "oscillator-network": dict(
        N=100,
        duration=350,
        trials=10,
        P=1.0,
        Q=1.0,
        R=1.0,
        epsilon=1e-5,
        tau=(0.5, 0.2, -0.5, -0.8, -0.2, 0.3),
        noise_bound=0.05,
        noise_variance=1.0,
    ),
    "diffusion-field": dict(
        N=5,
        duration=120,
        trials=10,
        P=1e3,
        Q=1e2,
        R=1.0,
        tau=None,
        noise_bound=0.0,
        noise_variance=0.1,
        epsilon=None,
    ),
    "fast-field": dict(
        N=5,
        duration=120,
        trials=10,
        P=1e3,
        Q=1e2,
        R=1.0,
        tau=None,
        noise_bound=0.0,
        noise_variance=0.1,
        epsilon=None,
    ),
}


@dataclass(frozen=True)
class RunResult:
    """Per-step aggregates of one Monte Carlo run."""

    steps: np.ndarray
    rmse: np.ndarray
    rmse_normalized: np.ndarray
    wall_ms: np.ndarray
    delta: float
    ledger: object
    windows: int
    failures: int
    extras: dict = field(default_factory=dict)


def hydraulic_model(Ts=0.01):
    """Tank-loop model: two hydraulic capacitances joined by a line."""
    C1, C2, R1, R2, Lf, S = 0.05, 0.01, 2.0, 15.0, 2.0, 1.0
    Ac = np.array(
        [
            [0.0, 0.0, -1.0 / C1],
            [0.0, -1.0 / (R2 * C2), 1.0 / C2],
            [1.0 / Lf, -1.0 / Lf, -R1 / Lf],
        ]
    )
    Bc = np.array([[1.0 / C1], [0.0], [0.0]])
    A, B = discretize(ContinuousModel(Ac, Bc, Ts))
    C = np.array([[0.0, C2 / S, 0.0]])
    return LinearSystem(A, B, C)


def oscillator_model(Ts=0.1):
    """Two unit masses chained by stiffness-10 springs, position 2 read out."""
    k1 = k2 = 10.0
    Ac = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [-(k1 + k2), 0.0, k2, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [k2, 0.0, -k2, 0.0],
        ]
    )
    A, _ = discretize(ContinuousModel(Ac, np.zeros((4, 1)), Ts))
    C = np.array([[0.0, 0.0, 1.0, 0.0]])
    return LinearSystem(A, np.zeros((4, 0)), C)


def oscillator_mode1():
    """Slow-mode initial condition; unit amplitude on the read position."""
    return np.array([(math.sqrt(5.0) - 1.0) / 2.0, 0.0, 1.0, 0.0])


def network_laplacian():
    L = np.zeros((6, 6))
    for i, j in NETWORK_EDGES:
        L[i, i] += 1.0
        L[j, j] += 1.0
        L[i, j] -= 1.0
        L[j, i] -= 1.0
    return L


def network_model(gamma):
    osc = oscillator_model()
    return build_oscillator_network(osc.A, network_laplacian(), gamma)


def _hydraulic_parts(cfg):
    sys = hydraulic_model()
    sensors = tuple(
        BinarySensor(0, t, cfg.noise_bound, cfg.noise_variance) for t in cfg.tau
    )
    T = cfg.duration
    u = 0.75 * np.sin(2.0 * np.pi * 0.5 * 0.01 * np.arange(T)) + 1.0
    inputs = u[:, None]
    xbar0 = np.full(3, 5.0)
    Bu = np.ascontiguousarray(inputs @ sys.B.T)

    def trial(rng):
        x0 = rng.uniform(0.0, 10.0, 3)
        W = rng.uniform(-cfg.noise_bound, cfg.noise_bound, (T, 3))
        V = rng.uniform(-cfg.noise_bound, cfg.noise_bound, (T + 1, len(sensors)))
        X = kernels.simulate_lti(np.ascontiguousarray(sys.A), x0, Bu, W)
        labels = np.array([sense(sys, sensors, X[t], V[t]) for t in range(T + 1)])
        return X, labels, xbar0

    return dict(sys=sys, sensors=sensors, inputs=inputs, trial=trial, xbar0=xbar0)


def _oscillator_parts(cfg):
    sys = oscillator_model()
    sensors = tuple(
        BinarySensor(0, t, cfg.noise_bound, cfg.noise_variance) for t in cfg.tau
    )
    T = cfg.duration
    inputs = np.zeros((T, 0))
    x0 = oscillator_mode1()

    def trial(rng):
        V = rng.uniform(-cfg.noise_bound, cfg.noise_bound, (T + 1, len(sensors)))
        X = kernels.simulate_lti(
            np.ascontiguousarray(sys.A), x0, np.zeros((T, 4)), np.zeros((T, 4))
        )
        labels = np.array([sense(sys, sensors, X[t], V[t]) for t in range(T + 1)])
        xbar0 = rng.uniform(-5.0, 5.0, 4)
        return X, labels, xbar0

    return dict(sys=sys, sensors=sensors, inputs=inputs, trial=trial, xbar0=None)


def _network_parts(cfg):
    sys = network_model(cfg.gamma)
    sensors = tuple(
        BinarySensor(i, t, cfg.noise_bound, cfg.noise_variance)
        for i, t in enumerate(cfg.tau)
    )
    T = cfg.duration
    inputs = np.zeros((T, 0))
    center = np.tile(oscillator_mode1(), 6)

    def trial(rng):
        # true start is drawn around the slow-mode vector; the filter prior
        # keeps the nominal center
        x0 = center + rng.uniform(-5.0, 5.0, 24)
        V = rng.uniform(-cfg.noise_bound, cfg.noise_bound, (T + 1, len(sensors)))
        X = kernels.simulate_lti(
            np.ascontiguousarray(sys.A), x0, np.zeros((T, 24)), np.zeros((T, 24))
        )
        labels = np.array([sense(sys, sensors, X[t], V[t]) for t in range(T + 1)])
        return X, labels, center.copy()

    return dict(sys=sys, sensors=sensors, inputs=inputs, trial=trial, xbar0=None)


_FIELD_GEOMETRY = {}
_FIELD_LAYOUT = {}


def _field_geometry():
    """Meshes, operators, and both field models; built once."""
    if "geo" not in _FIELD_GEOMETRY:
        coarse = fem.generate_lshape_mesh(0.3)
        fine = fem.generate_lshape_mesh(0.1)
        lam, g = 0.01, 30.0
        ops_c = fem.assemble(coarse, lam, g)
        ops_f = fem.assemble(fine, lam, g)
        fm_c = fem.discretize_field(ops_c, 10.0)
        fm_f = fem.discretize_field(ops_f, 1.0)
        a = math.sqrt(fem.AREA / 3.0)
        probes = []
        step = a / 11.0
        for i in range(1, 22):
            for j in range(1, 22):
                x, y = i * step, j * step
                if x < 2.0 * a - 1e-9 and y < 2.0 * a - 1e-9:
                    if y < a - 1e-9 or x < a - 1e-9:
                        probes.append((x, y))
        probes = np.array(probes)
        Cc_p, Dc_p = fem.sensor_rows(coarse, probes)
        Cf_p, Df_p = fem.sensor_rows(fine, probes)
        _FIELD_GEOMETRY["geo"] = dict(
            coarse=coarse,
            fine=fine,
            ops_c=ops_c,
            ops_f=ops_f,
            fm_c=fm_c,
            fm_f=fm_f,
            gamma_val=g,
            probes=probes,
            probe_c=(Cc_p, Dc_p @ ops_c.gamma_bc),
            probe_f=(Cf_p, Df_p @ ops_f.gamma_bc),
        )
    return _FIELD_GEOMETRY["geo"]


def _field_layout(cfg):
    """Sensor bank and ground-truth readings; deterministic per seed."""
    key = (cfg.seed, cfg.n_sensors, cfg.duration, cfg.tau)
    if key not in _FIELD_LAYOUT:
        geo = _field_geometry()
        rng = seeded_rng(child_seeds(cfg.seed, 1)[0] ^ 0x5EED)
        a = math.sqrt(fem.AREA / 3.0)
        pts = []
        while len(pts) < cfg.n_sensors:
            x = rng.uniform(0.05 * a, 1.95 * a)
            y = rng.uniform(0.05 * a, 1.95 * a)
            if y < 0.95 * a or x < 0.95 * a:
                pts.append((x, y))
        pts = np.array(pts)
        if cfg.tau is None:
            tau = rng.uniform(0.05, 29.95, cfg.n_sensors)
        else:
            tau = np.resize(np.array(cfg.tau, dtype=float), cfg.n_sensors)
        Cc, Dc = fem.sensor_rows(geo["coarse"], pts)
        Cf, Df = fem.sensor_rows(geo["fine"], pts)
        off_c = Dc @ geo["ops_c"].gamma_bc
        off_f = Df @ geo["ops_f"].gamma_bc
        sub = cfg.duration * 10
        truth_f = fem.simulate_ground_truth(geo["fm_f"], 0.0, sub)
        ts = np.arange(0, sub + 1, 10)
        Xs = truth_f[ts]
        readings = Xs @ Cf.T + off_f[None, :]
        Cp, off_p = geo["probe_f"]
        probe_truth = Xs @ Cp.T + off_p[None, :]
        _FIELD_LAYOUT[key] = dict(
            points=pts,
            tau=tau,
            Cc=Cc,
            off_c=off_c,
            readings=readings,
            probe_truth=probe_truth,
        )
    return _FIELD_LAYOUT[key]


def _field_parts(cfg):
    geo = _field_geometry()
    lay = _field_layout(cfg)
    m = geo["fm_c"].A.shape[0]
    push = geo["fm_c"].push
    sys = LinearSystem(geo["fm_c"].A, push[:, None], lay["Cc"])
    T = cfg.duration
    inputs = np.ones((T, 1))
    r = cfg.noise_variance
    # estimation-side sensors fold the Dirichlet offset into the threshold
    sensors_est = tuple(
        BinarySensor(i, float(lay["tau"][i] - lay["off_c"][i]), 0.0, r)
        for i in range(cfg.n_sensors)
    )
    sensors_raw = tuple(
        BinarySensor(i, float(lay["tau"][i]), 0.0, r) for i in range(cfg.n_sensors)
    )
    xbar0 = np.full(m, 5.0)

    def trial(rng):
        Z = rng.standard_normal((T + 1, cfg.n_sensors))
        labels = (
            lay["readings"] + math.sqrt(r) * Z >= lay["tau"][None, :]
        ).astype(float)
        return lay["probe_truth"], labels, xbar0

    return dict(
        sys=sys,
        sensors=sensors_est,
        sensors_raw=sensors_raw,
        inputs=inputs,
        trial=trial,
        xbar0=xbar0,
        offsets=lay["off_c"],
        probe_rows=geo["probe_c"],
        field=True,
    )


def _build_parts(cfg):
    if cfg.kind == "hydraulic":
        return _hydraulic_parts(cfg)
    if cfg.kind == "oscillator":
        return _oscillator_parts(cfg)
    if cfg.kind == "oscillator-network":
        return _network_parts(cfg)
    return _field_parts(cfg)


def _weights(cfg, n):
    scale = cfg.epsilon if cfg.epsilon is not None else cfg.P
    return MheWeights(
        scale * np.eye(n),
        cfg.Q * np.eye(n),
        tuple([cfg.R] * _sensor_count(cfg)),
    )


def _sensor_count(cfg):
    if cfg.kind in ("diffusion-field", "fast-field"):
        return cfg.n_sensors
    return len(cfg.tau)


def _make_filter(cfg, parts):
    sys = parts["sys"]
    est = cfg.estimator
    if est in ("lsmhe", "pwmhe", "pwmhe-constrained"):
        return MovingHorizonFilter(
            sys,
            parts["sensors"],
            _weights(cfg, sys.n),
            cfg.N,
            parts["_xbar0"],
            method="pwmhe" if est.startswith("pwmhe") else "lsmhe",
            constrained=est == "pwmhe-constrained",
        )
    scale = cfg.epsilon if cfg.epsilon is not None else cfg.P
    if est == "mhmap":
        priors = GaussianPriors(
            parts["_xbar0"],
            scale * np.eye(sys.n),
            cfg.Q * np.eye(sys.n),
            tuple([cfg.noise_variance] * _sensor_count(cfg)),
        )
        return MapFilter(sys, parts["sensors"], priors, cfg.N)
    local = LocalModel(cfg.local_order, 10.0, cfg.local_q)
    return FastFilter(
        sys,
        parts["sensors_raw"],
        scale * np.eye(sys.n),
        cfg.Q * np.eye(sys.n),
        cfg.N,
        parts["_xbar0"],
        local,
        local_window=cfg.local_window,
        offsets=parts["offsets"],
    )


def _labels_for_estimator(cfg, labels):
    if cfg.estimator in ("mhmap", "fast-mhmap"):
        if set(np.unique(labels).tolist()) <= {0.0, 1.0}:
            return labels
        return 0.5 * (labels + 1.0)
    if set(np.unique(labels).tolist()) <= {0.0, 1.0}:
        return 2.0 * labels - 1.0
    return labels


def _delta_of_labels(sys, sensors, labels, N):
    Y = np.asarray(labels, dtype=float)
    if set(np.unique(Y).tolist()) <= {0.0, 1.0}:
        Y = 2.0 * Y - 1.0
    flips = (Y[:-1] * Y[1:] < 0).astype(float)
    p = len(sensors)
    n = sys.n
    powrows = np.zeros((p, N, n))
    for i, s in enumerate(sensors):
        row = sys.C[s.row].copy()
        for d in range(N):
            powrows[i, d] = row
            row = row @ sys.A
    return float(
        kernels.min_delta_over_windows(
            np.ascontiguousarray(powrows), np.ascontiguousarray(flips), N
        )
    )


def run_scenario(cfg):
    """Monte Carlo run of one configuration; returns per-step aggregates.

    Raises a convergence error when more than 1% of all window solves fail
    across the trials.
    """
    parts = _build_parts(cfg)
    sys = parts["sys"]
    T = cfg.duration
    N = cfg.N
    is_field = parts.get("field", False)
    lw = cfg.local_window if cfg.local_window is not None else N + 1
    warmup = lw - 1 if cfg.estimator == "fast-mhmap" else N
    steps = np.arange(warmup, T + 1)
    Wn = steps.shape[0]

    seeds = child_seeds(cfg.seed, cfg.trials)
    sq = np.zeros((cfg.trials, Wn))
    ref = np.zeros((cfg.trials, Wn))
    wall = np.zeros((cfg.trials, Wn))
    deltas = np.zeros(cfg.trials)
    windows = 0
    failures = 0
    first_truth = None
    first_labels = None

    for l, s in enumerate(seeds):
        rng = seeded_rng(s)
        truth, labels, xbar0 = parts["trial"](rng)
        if l == 0:
            first_truth, first_labels = truth, labels
        parts["_xbar0"] = xbar0
        filt = _make_filter(cfg, parts)
        feed_labels = _labels_for_estimator(cfg, labels)
        probe_rows = parts.get("probe_rows")
        w = 0
        for t in range(T + 1):
            u_prev = parts["inputs"][t - 1] if t > 0 else None
            tic = time.perf_counter()
            X = filt.feed(feed_labels[t], u_prev)
            toc = time.perf_counter()
            if X is None:
                continue
            est = X[1]
            k = t - N + 1
            if is_field:
                Cp, off_p = probe_rows
                val = Cp @ est + off_p
                err = val - truth[k]
                sq[l, w] = float(np.mean(err**2))
                ref[l, w] = float(np.mean(truth[k] ** 2))
            else:
                err = est - truth[k]
                sq[l, w] = float(err @ err)
                ref[l, w] = float(truth[k] @ truth[k])
            wall[l, w] = toc - tic
            w += 1
        windows += filt.windows
        failures += filt.failures
        if cfg.compute_delta:
            deltas[l] = _delta_of_labels(
                sys, parts.get("sensors_raw", parts["sensors"]), labels, N
            )

    if failures > 0.01 * max(1, windows):
        raise ConvergenceError(
            f"{failures} of {windows} window solves failed to converge "
            f"({cfg.kind}/{cfg.estimator}, N={N}, seed={cfg.seed})"
        )

    rmse = np.sqrt(np.mean(sq, axis=0))
    denom = np.sqrt(np.maximum(np.mean(ref, axis=0), 1e-300))
    ledger = None
    delta = float(np.mean(deltas)) if cfg.compute_delta else float("nan")
    if cfg.compute_delta and not is_field:
        bounds = _estimate_bounds(cfg, parts, first_truth)
        phi_bar = estimate_phi_bar(
            sys, parts.get("sensors_raw", parts["sensors"]), first_labels, N
        )
        if phi_bar > 0:
            ledger = stability_ledger(
                sys,
                parts["sensors"],
                _weights(cfg, sys.n),
                bounds,
                delta,
                N,
                phi_bar,
            )
    extras = dict(
        kind=cfg.kind,
        estimator=cfg.estimator,
        N=N,
        trials=cfg.trials,
        seed=cfg.seed,
        duration=T,
        final_rmse=float(rmse[-1]),
        final_rmse_normalized=float(rmse[-1] / denom[-1]),
        mean_rmse=float(np.mean(rmse)),
        delta=delta,
    )
    if ledger is not None:
        extras.update(a1=ledger.a1, a2=ledger.a2, e_inf=ledger.e_inf)
    return RunResult(
        steps,
        rmse,
        rmse / denom,
        1e3 * np.mean(wall, axis=0),
        delta,
        ledger,
        windows,
        failures,
        extras,
    )


def _estimate_bounds(cfg, parts, truth):
    rho_X = (
        cfg.rho_X
        if cfg.rho_X is not None
        else float(np.max(np.linalg.norm(truth, axis=1)))
    )
    if cfg.rho_U is not None:
        rho_U = cfg.rho_U
    elif parts["inputs"].shape[1]:
        rho_U = float(np.max(np.linalg.norm(parts["inputs"], axis=1)))
    else:
        rho_U = 0.0
    n = parts["sys"].n
    rho_W = cfg.noise_bound * math.sqrt(n) if cfg.kind == "hydraulic" else 0.0
    rho_V = tuple([cfg.noise_bound] * _sensor_count(cfg))
    return BoundedSets(rho_X, rho_U, rho_W, rho_V)


def sweep(cfg, axis, values, out_dir=None):
    """Run the scenario across one parameter axis with common noise.

    Returns [(value, RunResult), ...]; every grid value reuses the same
    per-trial seed stream.  With out_dir, writes sweep.csv there.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    rows = []
    for v in values:
        if axis == "N":
            c = replace(cfg, N=int(v))
        elif axis == "tau":
            c = replace(cfg, tau=(float(v),) * len(cfg.tau or (0,)))
        elif axis == "r":
            c = replace(cfg, noise_variance=float(v))
        else:
            c = replace(cfg, gamma=float(v))
        rows.append((float(v), run_scenario(c)))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        lines = ["value,delta,rmse_final,rmse_mean,rmse_normalized_final,wall_ms_mean"]
        for v, res in rows:
            lines.append(
                f"{v!r},{res.delta!r},{float(res.rmse[-1])!r},"
                f"{float(np.mean(res.rmse))!r},"
                f"{float(res.rmse_normalized[-1])!r},"
                f"{float(np.mean(res.wall_ms)):.3f}"
            )
        with open(os.path.join(out_dir, "sweep.csv"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
    return rows


def noise_assisted_sweep(cfg, r_values):
    """Mean reported RMSE per output-noise level, common noise streams.

    The same per-trial standard normal draws are scaled by each candidate
    noise level, so the curve is smooth in r and reproducible bit for bit.
    """
    rows = sweep(cfg, "r", r_values)
    return np.array([float(np.mean(res.rmse)) for _, res in rows])


def emit(result, cfg, out_dir):
    """Write rmse.csv, summary.json, and ledger.txt under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    lines = [RMSE_HEADER]
    for i, t in enumerate(result.steps):
        lines.append(
            f"{int(t)},{float(result.rmse[i])!r},"
            f"{float(result.rmse_normalized[i])!r},"
            f"{float(result.wall_ms[i]):.3f}"
        )
    with open(os.path.join(out_dir, "rmse.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    summary = dict(result.extras)
    summary["windows"] = result.windows
    summary["failures"] = result.failures
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    led_lines = [f"delta = {result.delta!r}"]
    if result.ledger is not None:
        led = result.ledger
        for name in (
            "a1",
            "a2",
            "b1",
            "b2",
            "c1",
            "c2",
            "c3",
            "c4",
            "d1",
            "d2",
            "e_inf",
            "L_bar",
            "phi_bar",
        ):
            led_lines.append(f"{name} = {getattr(led, name)!r}")
    with open(os.path.join(out_dir, "ledger.txt"), "w") as fh:
        fh.write("\n".join(led_lines) + "\n")


def observability_report(cfg):
    """Switching statistics and observability measure of one seeded run."""
    parts = _build_parts(cfg)
    rng = seeded_rng(child_seeds(cfg.seed, 1)[0])
    truth, labels, _ = parts["trial"](rng)
    sensors = parts.get("sensors_raw", parts["sensors"])
    delta = _delta_of_labels(parts["sys"], sensors, labels, cfg.N)
    switch = detect_switchings(labels)
    counts = [len(s) for s in switch]
    return dict(
        kind=cfg.kind,
        N=cfg.N,
        delta=delta,
        switchings_per_sensor=counts,
        instants=int(np.asarray(labels).shape[0]),
    )


def ledger_report(cfg):
    """Stability constants plus the tuned arrival scale for one scenario."""
    parts = _build_parts(cfg)
    sys = parts["sys"]
    rng = seeded_rng(child_seeds(cfg.seed, 1)[0])
    truth, labels, _ = parts["trial"](rng)
    sensors = parts.get("sensors_raw", parts["sensors"])
    delta = _delta_of_labels(sys, sensors, labels, cfg.N)
    phi_bar = estimate_phi_bar(sys, sensors, labels, cfg.N)
    bounds = _estimate_bounds(cfg, parts, truth)
    weights = _weights(cfg, sys.n)
    led = stability_ledger(sys, parts["sensors"], weights, bounds, delta, cfg.N, phi_bar)
    out = dict(delta=delta, phi_bar=phi_bar)
    for name in ("a1", "a2", "b1", "b2", "c1", "c2", "c3", "c4", "d1", "d2", "e_inf"):
        out[name] = getattr(led, name)
    if delta > 0:
        out["epsilon_tuned"] = tune_epsilon(
            sys, parts["sensors"], np.eye(sys.n), weights, bounds, delta, cfg.N, phi_bar
        )
    return out
