"""Two-stage fast approximation of the probabilistic moving-horizon filter.

Stage 1 runs, per sensor, a tiny MAP window over a local model of that
sensor's continuous reading (a random walk of order K in the reading),
turning the binary labels into pseudo-measurements of the output.  Stage 2
fuses all pseudo-measurements into a single quadratic window problem over
the full state, solved closed form with one block factorization.

The per-step work is p tiny solves plus one factorization, independent of
how expensive the full nonlinear window cost would be.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels, solvers
from .errors import ConvergenceError, ModelError
from .model import LinearSystem, BinarySensor
from .probabilistic import GaussianPriors, MapWindow, solve_mh_map


def _frozen(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LocalModel:
    """Order-K random-walk model of one sensor reading.

    K = 0: the reading itself does the walking, variance q Ts per step.
    K = 1: the reading carries a rate state driven by white noise, with
    the usual integrated covariance q [[Ts^3/3, Ts^2/2], [Ts^2/2, Ts]].
    G_loc stores the inverse of that covariance; C_loc reads the value.
    """

    K: int
    Ts: float
    q: float
    A_loc: np.ndarray = None
    G_loc: np.ndarray = None
    C_loc: np.ndarray = None

    def __post_init__(self):
        K, Ts, q = int(self.K), float(self.Ts), float(self.q)
        if K not in (0, 1):
            raise ModelError("local model order must be 0 or 1")
        if Ts <= 0 or q <= 0:
            raise ModelError("step and noise intensity must be positive")
        if K == 0:
            A = np.array([[1.0]])
            cov = np.array([[q * Ts]])
        else:
            A = np.array([[1.0, Ts], [0.0, 1.0]])
            cov = q * np.array(
                [[Ts**3 / 3.0, Ts**2 / 2.0], [Ts**2 / 2.0, Ts]]
            )
        C = np.zeros((1, K + 1))
        C[0, 0] = 1.0
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "Ts", Ts)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "A_loc", _frozen(A))
        object.__setattr__(self, "G_loc", _frozen(np.linalg.inv(cov)))
        object.__setattr__(self, "C_loc", _frozen(C))

    def system(self):
        return LinearSystem(self.A_loc, np.zeros((self.K + 1, 0)), self.C_loc)


@dataclass(frozen=True)
class PseudoMeasurementSet:
    """Stage-1 output: reading estimates per sensor and their fusion weights.

    sigma: (p, L) estimated readings over the last L instants, newest last;
    Xi: (p,) quadratic weights the fusion stage puts on them.
    """

    sigma: np.ndarray
    Xi: np.ndarray

    def __post_init__(self):
        sigma = _frozen(np.atleast_2d(self.sigma))
        Xi = _frozen(np.atleast_1d(self.Xi))
        if Xi.shape[0] != sigma.shape[0]:
            raise ModelError("one fusion weight per sensor is required")
        if np.any(Xi < 0):
            raise ModelError("fusion weights must be nonnegative")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "Xi", Xi)


def local_map_step(
    local, threshold, variance, labels, chi_bar, psi_local, x_init=None
):
    """One stage-1 window solve for a single sensor.

    labels: (L,) 0/1 labels, oldest first; chi_bar: arrival mean of the
    local state; psi_local: arrival weight.  Returns (chi (L, K+1), report)
    where chi[:, 0] is the estimated reading trajectory.  The window holds
    exactly (K+1) L variables.
    """
    labels = np.asarray(labels, dtype=float).ravel()
    sys_loc = local.system()
    sensor = BinarySensor(row=0, threshold=float(threshold), noise_variance=float(variance))
    priors = GaussianPriors(
        x0_mean=np.asarray(chi_bar, dtype=float),
        P=np.asarray(psi_local, dtype=float),
        G=local.G_loc,
        r=(float(variance),),
    )
    window = MapWindow(
        inputs=np.zeros((labels.shape[0] - 1, 0)),
        outputs=labels[:, None],
        xbar=np.asarray(chi_bar, dtype=float),
    )
    chi, _, rep = solve_mh_map(sys_loc, (sensor,), priors, window, x_init=x_init)
    return chi, rep


def global_fuse(sys, sensors, Psi, G, inputs, xbar, pseudo, offsets=None):
    """Stage-2 closed-form fusion over the full state window.

    Minimizes the arrival and dynamics terms plus, for every instant k and
    sensor i, Xi_i (C_i x_k + offset_i - sigma_hat[i, k])^2.  offsets hold
    any known constant part of the reading (boundary contributions); the
    window length is inferred from the inputs.  One block factorization.
    """
    N = np.asarray(inputs).shape[0]
    p = len(sensors)
    sigma = pseudo.sigma[:, -(N + 1) :]
    if sigma.shape[1] != N + 1:
        raise ModelError("pseudo-measurements must cover the fusion window")
    C = np.ascontiguousarray(np.array([sys.C[s.row] for s in sensors], dtype=float))
    off = np.zeros(p) if offsets is None else np.asarray(offsets, dtype=float)
    targets = np.ascontiguousarray(sigma.T - off[None, :])
    Bu = np.zeros((N, sys.n))
    if sys.m:
        Bu = np.asarray(inputs, dtype=float) @ sys.B.T
    diag, E, D, _ = kernels.window_quadratic_blocks(
        np.ascontiguousarray(sys.A),
        np.ascontiguousarray(np.asarray(Psi, dtype=float)),
        np.ascontiguousarray(np.asarray(G, dtype=float)),
        np.asarray(xbar, dtype=float),
        np.ascontiguousarray(Bu),
        C,
        np.asarray(pseudo.Xi, dtype=float),
        targets,
        np.ones((N + 1, p)),
    )
    if sys.n >= 64:
        X = solvers.block_solve_dense(diag, E, D)
    else:
        X = solvers.block_solve(diag, E, D)
    return X, solvers.SolveReport(1, 0.0, solvers.STATUS_CONVERGED, 0.0)


class FastFilter:
    """Window-sliding driver of the two-stage filter.

    Keeps a rolling buffer of labels per sensor; each tick runs one local
    window per sensor (stage 1) and one fused solve (stage 2).  Counters
    local_solves and factorizations expose the per-step work.
    """

    def __init__(
        self,
        sys,
        sensors,
        Psi,
        G,
        N,
        x0_mean,
        local,
        variances=None,
        local_window=None,
        Xi=None,
        psi_local=None,
        offsets=None,
        flip_gate=True,
    ):
        if local_window is None:
            local_window = N + 1
        p = len(sensors)
        if local_window < N + 1:
            raise ModelError("the local window must cover the fusion window")
        self.sys = sys
        self.sensors = sensors
        self.Psi = np.asarray(Psi, dtype=float)
        self.G = np.asarray(G, dtype=float)
        self.N = N
        self.local = local
        self.local_window = int(local_window)
        self.variances = (
            np.array([s.noise_variance for s in sensors], dtype=float)
            if variances is None
            else np.asarray(variances, dtype=float)
        )
        self.Xi = (
            1.0 / self.variances if Xi is None else np.asarray(Xi, dtype=float)
        )
        self.psi_local = (
            np.diag([0.01] + [1.0] * local.K)
            if psi_local is None
            else np.asarray(psi_local, dtype=float)
        )
        self.offsets = (
            np.zeros(p) if offsets is None else np.asarray(offsets, dtype=float)
        )
        self.flip_gate = bool(flip_gate)
        self._xbar = np.asarray(x0_mean, dtype=float).copy()
        self._chi_bar = []
        for i, s in enumerate(sensors):
            chi0 = np.zeros(local.K + 1)
            chi0[0] = float(sys.C[s.row] @ self._xbar) + self.offsets[i]
            self._chi_bar.append(chi0)
        self._warm_loc = [None] * p
        self._inputs = []
        self._outputs = []
        self.local_solves = 0
        self.factorizations = 0
        self.failures = 0
        self.windows = 0

    def feed(self, y, u=None):
        """Push one instant of 0/1 labels; returns (N+1, n) estimates or None."""
        p = len(self.sensors)
        if self._outputs:
            self._inputs.append(
                np.zeros(self.sys.m) if u is None else np.asarray(u, dtype=float)
            )
        self._outputs.append(np.asarray(y, dtype=float))
        if len(self._outputs) < self.local_window:
            # keep the arrival prediction aligned with the oldest window state
            t = len(self._outputs) - 1
            if 1 <= t <= self.local_window - 1 - self.N:
                u_prev = self._inputs[-1] if self._inputs else np.zeros(self.sys.m)
                self._xbar = self.sys.A @ self._xbar + (
                    self.sys.B @ u_prev if self.sys.m else 0.0
                )
            return None
        labels = np.array(self._outputs[-self.local_window :])
        sigma = np.empty((p, self.local_window))
        for i, s in enumerate(self.sensors):
            try:
                chi, _ = local_map_step(
                    self.local,
                    s.threshold,
                    self.variances[i],
                    labels[:, i],
                    self._chi_bar[i],
                    self.psi_local,
                    x_init=self._warm_loc[i],
                )
            except ConvergenceError as e:
                self.failures += 1
                chi = e.last_iterate.reshape(self.local_window, self.local.K + 1)
            self.local_solves += 1
            sigma[i] = chi[:, 0]
            self._chi_bar[i] = chi[1].copy()
            nxt = self.local.A_loc @ chi[-1]
            self._warm_loc[i] = np.vstack([chi[1:], nxt[None, :]])
        Xi = self.Xi
        if self.flip_gate:
            # a window whose labels never flip pins nothing: its local
            # estimate rides the prior, so fusing it would only inject the
            # prior's bias into the field; the threshold crossings are where
            # the binary data actually localizes the reading
            flips = (labels.min(axis=0) < labels.max(axis=0)).astype(float)
            Xi = Xi * flips
        pseudo = PseudoMeasurementSet(sigma, Xi)
        inputs = (
            np.array(self._inputs[-self.N :])
            if self.sys.m
            else np.zeros((self.N, 0))
        )
        X, _ = global_fuse(
            self.sys,
            self.sensors,
            self.Psi,
            self.G,
            inputs,
            self._xbar,
            pseudo,
            offsets=self.offsets,
        )
        self.factorizations += 1
        self.windows += 1
        self._xbar = X[1].copy()
        return X
