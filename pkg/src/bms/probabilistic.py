"""Moving-horizon maximum a posteriori estimation for binary sensors.

The labels are Bernoulli draws: P(y = 1 | x) = Q((tau - Cx)/sqrt(r)) with Q
the standard normal upper tail, so a window's negative log posterior is

    ||x_{t-N} - xbar||_Psi^2 + sum_k ||x_{k+1} - A x_k - B u_k||_G^2
    - sum_{k,i} log P(y_{k,i} | x_k)

over the states x_{t-N..t}.  The cost is smooth and convex; a quasi-Newton
loop with the warm start shifted from the previous window minimizes it.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels, solvers
from .errors import ConditioningError, ConvergenceError, ModelError, WeightError
from .model import step
from .tolerances import OPT_TOL, QN_MAX_ITER


def _frozen(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


def log_tail(s):
    """log Q(s) for scalar or array s, Q the standard normal upper tail."""
    arr = np.asarray(s, dtype=float)
    if arr.ndim == 0:
        return float(kernels.log_tail(float(arr)))
    return kernels.log_tail_grid(np.ascontiguousarray(arr.ravel())).reshape(arr.shape)


def tail_cdf(s):
    """Q(s) itself; exp of the log-domain computation."""
    return np.exp(log_tail(s))


@dataclass(frozen=True)
class GaussianPriors:
    """Inverse covariances of the probabilistic model.

    P weights the initial state around x0_mean, G the process disturbance,
    r holds the per-sensor output noise variances, and Psi is the arrival
    weight of the sliding window (defaults to P).
    """

    x0_mean: np.ndarray
    P: np.ndarray
    G: np.ndarray
    r: tuple
    Psi: np.ndarray = None

    def __post_init__(self):
        x0 = _frozen(np.atleast_1d(self.x0_mean))
        P = _frozen(self.P)
        G = _frozen(self.G)
        Psi = _frozen(self.Psi if self.Psi is not None else self.P)
        r = tuple(float(v) for v in np.atleast_1d(self.r))
        for name, W in (("P", P), ("G", G), ("Psi", Psi)):
            if W.ndim != 2 or W.shape[0] != W.shape[1]:
                raise WeightError(f"{name} must be square")
            if not np.allclose(W, W.T, atol=1e-12):
                raise WeightError(f"{name} must be symmetric")
            try:
                np.linalg.cholesky(W)
            except np.linalg.LinAlgError:
                raise WeightError(f"{name} is not positive definite") from None
        if any(v <= 0 for v in r):
            raise WeightError("output noise variances must be positive")
        object.__setattr__(self, "x0_mean", x0)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "Psi", Psi)
        object.__setattr__(self, "r", r)


@dataclass(frozen=True)
class MapWindow:
    """One window of 0/1 labels, inputs, and the smoothed arrival mean.

    xbar is the previous window's smoothed estimate of the oldest state,
    not the one-step prediction the deterministic filters use.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    xbar: np.ndarray

    def __post_init__(self):
        inputs = _frozen(np.atleast_2d(self.inputs))
        outputs = _frozen(np.atleast_2d(self.outputs))
        xbar = _frozen(np.atleast_1d(self.xbar))
        if outputs.shape[0] != inputs.shape[0] + 1:
            raise ModelError("a window needs one more output instant than inputs")
        vals = set(np.unique(outputs).tolist())
        if not vals <= {0.0, 1.0}:
            raise ModelError("probabilistic labels must be 0/1")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "xbar", xbar)

    @property
    def N(self):
        return self.outputs.shape[0] - 1


def sensor_loglik(c_row, threshold, variance, x, y):
    """Log-likelihood of one label and its gradient in the state.

    Returns (log P(y | x), d/dx of it).  At C x = threshold both labels
    are equally likely, so the value is log(1/2) either way.
    """
    c = np.asarray(c_row, dtype=float)
    sr = float(np.sqrt(variance))
    s = (float(threshold) - float(c @ np.asarray(x, dtype=float))) / sr
    if y in (1, 1.0, True):
        ll = float(kernels.log_tail(s))
        grad = (kernels.tail_ratio(s) / sr) * c
    elif y in (0, 0.0, False):
        ll = float(kernels.log_tail(-s))
        grad = -(kernels.tail_ratio(-s) / sr) * c
    else:
        raise ModelError("probabilistic labels must be 0/1")
    return ll, grad


def _map_arrays(sys, sensors, priors, window):
    C = np.ascontiguousarray(np.array([sys.C[s.row] for s in sensors], dtype=float))
    tau = np.array([s.threshold for s in sensors], dtype=float)
    r = np.array(priors.r, dtype=float)
    if r.shape[0] != C.shape[0]:
        raise WeightError("one noise variance per sensor is required")
    Bu = np.zeros((window.N, sys.n))
    if sys.m:
        Bu = window.inputs @ sys.B.T
    return C, tau, np.sqrt(r), np.ascontiguousarray(Bu)


def map_cost_grad(sys, sensors, priors, window, estimates):
    """Negative log posterior of a window and its gradient.

    estimates: (N+1, n) states, oldest first; gradient has the same shape.
    """
    C, tau, sqrt_r, Bu = _map_arrays(sys, sensors, priors, window)
    X = np.ascontiguousarray(np.asarray(estimates, dtype=float))
    Y = np.ascontiguousarray(np.asarray(window.outputs, dtype=float))
    return kernels.map_cost_grad(
        X,
        np.ascontiguousarray(sys.A),
        np.ascontiguousarray(priors.Psi),
        np.ascontiguousarray(priors.G),
        np.asarray(window.xbar, dtype=float),
        Bu,
        C,
        tau,
        sqrt_r,
        Y,
    )


def _propagated_start(sys, window):
    X = np.zeros((window.N + 1, sys.n))
    X[0] = window.xbar
    for k in range(window.N):
        u = window.inputs[k] if sys.m else np.zeros(0)
        X[k + 1] = step(sys, X[k], u, np.zeros(sys.n))
    return X


def _map_scale(sys, sensors, priors, window):
    """Diagonal curvature estimate for preconditioning the iterations.

    Uses the quadratic terms plus the peak likelihood curvature 2/(pi r)
    of each sensor, which bounds the Bernoulli term's Hessian diagonal.
    """
    C, tau, sqrt_r, Bu = _map_arrays(sys, sensors, priors, window)
    p = C.shape[0]
    R_eff = (2.0 / np.pi) / np.maximum(sqrt_r**2, 1e-300)
    full = np.ones((window.N + 1, p))
    diag, _, _, _ = kernels.window_quadratic_blocks(
        np.ascontiguousarray(sys.A),
        np.ascontiguousarray(priors.Psi),
        np.ascontiguousarray(priors.G),
        np.asarray(window.xbar, dtype=float),
        Bu,
        C,
        R_eff,
        np.broadcast_to(tau, (window.N + 1, p)).copy(),
        full,
    )
    d = np.concatenate([np.diag(diag[j]) for j in range(diag.shape[0])])
    return np.sqrt(np.maximum(d, 1e-12 * np.max(d)))


def _hessian_blocks(A, Psi, G, xbar, Bu, C, tau, sqrt_r, Y, X):
    """Exact Hessian of the window cost in block-tridiagonal form.

    The quadratic part contributes the usual prior/dynamics blocks; each
    label adds the rank-one likelihood curvature w(s) c c' / r with
    w(s) = lambda(s)(lambda(s) - s) in (0, 1), lambda the hazard ratio.
    """
    K, n = X.shape
    p = C.shape[0]
    none = np.zeros((K, p))
    diag, E, _, _ = kernels.window_quadratic_blocks(
        A, Psi, G, xbar, Bu, C, np.zeros(p), np.broadcast_to(tau, (K, p)).copy(), none
    )
    diag = 2.0 * diag
    for k in range(K):
        for i in range(p):
            s = (tau[i] - float(C[i] @ X[k])) / sqrt_r[i]
            if Y[k, i] < 0.5:
                s = -s
            lam = kernels.tail_ratio(s)
            w = lam * (lam - s) / (sqrt_r[i] * sqrt_r[i])
            diag[k] += w * np.outer(C[i], C[i])
    return diag, 2.0 * E


def solve_mh_map(
    sys, sensors, priors, window, x_init=None, tol=OPT_TOL, max_iter=QN_MAX_ITER
):
    """Window minimizer of the negative log posterior.

    Returns (estimates (N+1, n), cost, report).  Without sensors the
    posterior is the prior alone and the minimizer is the propagated
    arrival mean, reached with zero iterations.
    """
    N, n = window.N, sys.n
    C, tau, sqrt_r, Bu = _map_arrays(sys, sensors, priors, window)
    A = np.ascontiguousarray(sys.A)
    Psi = np.ascontiguousarray(priors.Psi)
    G = np.ascontiguousarray(priors.G)
    xbar = np.asarray(window.xbar, dtype=float)
    Y = np.ascontiguousarray(np.asarray(window.outputs, dtype=float))

    def fun(xflat):
        cost, grad = kernels.map_cost_grad(
            np.ascontiguousarray(xflat.reshape(N + 1, n)),
            A,
            Psi,
            G,
            xbar,
            Bu,
            C,
            tau,
            sqrt_r,
            Y,
        )
        return cost, grad.ravel()

    def newton_polish(xflat, rounds=8):
        # the line search stalls once cost decreases fall under ulp(f); the
        # smooth convex cost admits exact Newton steps through the
        # block-tridiagonal factorization, accepted while the gradient norm
        # shrinks, which stays meaningful far below the cost floor
        x = xflat.copy()
        _, g = fun(x)
        gn = float(np.linalg.norm(g))
        for _ in range(rounds):
            if gn <= tol:
                break
            diag, E = _hessian_blocks(A, Psi, G, xbar, Bu, C, tau, sqrt_r, Y, x.reshape(N + 1, n))
            try:
                d = -solvers.block_solve(diag, E, g.reshape(N + 1, n)).ravel()
            except ConditioningError:
                break
            alpha = 1.0
            for _ in range(30):
                x1 = x + alpha * d
                _, g1 = fun(x1)
                gn1 = float(np.linalg.norm(g1))
                if gn1 < gn:
                    break
                alpha *= 0.5
            else:
                break
            x, g, gn = x1, g1, gn1
        return x, gn

    x0 = (
        np.asarray(x_init, dtype=float).ravel().copy()
        if x_init is not None
        else _propagated_start(sys, window).ravel()
    )
    if len(sensors) == 0:
        X = _propagated_start(sys, window)
        return X, 0.0, solvers.SolveReport(0, 0.0, solvers.STATUS_CONVERGED, 0.0)
    scale = _map_scale(sys, sensors, priors, window)
    try:
        x, rep = solvers.quasi_newton_min(
            fun, x0, tol=tol, max_iter=max_iter, scale=scale
        )
    except ConvergenceError as e:
        x, gn = newton_polish(np.asarray(e.last_iterate, dtype=float))
        if not gn <= tol:
            raise
        rep = solvers.SolveReport(max_iter, gn, solvers.STATUS_CONVERGED, 0.0)
    cost, _ = fun(x)
    return x.reshape(N + 1, n), cost, rep


class MapFilter:
    """Window-sliding driver for the probabilistic estimator.

    The arrival mean is smoothed: each step reuses the previous window's
    estimate of the state that has just become oldest.  Warm starts shift
    the previous solution forward one instant.
    """

    def __init__(self, sys, sensors, priors, N):
        self.sys = sys
        self.sensors = sensors
        self.priors = priors
        self.N = N
        self._xbar = np.asarray(priors.x0_mean, dtype=float).copy()
        self._inputs = []
        self._outputs = []
        self._warm = None
        self.failures = 0
        self.windows = 0

    def feed(self, y, u=None):
        """Push one instant of 0/1 labels; returns (N+1, n) estimates or None."""
        if self._outputs:
            self._inputs.append(
                np.zeros(self.sys.m) if u is None else np.asarray(u, dtype=float)
            )
        self._outputs.append(np.asarray(y, dtype=float))
        if len(self._outputs) < self.N + 1:
            return None
        inputs = np.array(self._inputs[-self.N :])
        outputs = np.array(self._outputs[-(self.N + 1) :])
        window = MapWindow(inputs, outputs, self._xbar)
        self.windows += 1
        try:
            X, _, _ = solve_mh_map(
                self.sys, self.sensors, self.priors, window, x_init=self._warm
            )
        except ConvergenceError as e:
            self.failures += 1
            X = e.last_iterate.reshape(self.N + 1, self.sys.n)
        self._xbar = X[1].copy()
        nxt = step(
            self.sys,
            X[-1],
            np.zeros(self.sys.m) if self.sys.m else np.zeros(0),
            np.zeros(self.sys.n),
        )
        self._warm = np.vstack([X[1:], nxt[None, :]])
        return X
