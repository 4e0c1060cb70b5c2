"""Deterministic moving-horizon estimators for binary threshold sensors.

Two window costs over the states x_{t-N..t}:

* the switching-instant least-squares cost, an unconstrained quadratic
  solved in closed form through its block-tridiagonal normal equations;
* the piecewise-quadratic cost that charges every instant whose predicted
  output disagrees with the observed label, minimized iteratively.

Both share the arrival term ||x_{t-N} - xbar||_P^2 and the dynamics terms
||x_{k+1} - A x_k - B u_k||_Q^2.  The module also builds the polyhedral
output-consistency constraints, the stability ledger constants, and the
arrival-weight tuning rule they imply.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels, solvers
from .errors import (
    ConditioningError,
    ConvergenceError,
    ObservabilityError,
    WeightError,
)
from .model import step
from .solvers import SolveReport
from .tolerances import EPS_MARGIN, OPT_TOL, QN_MAX_ITER


def _frozen(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MheWeights:
    """Arrival weight P, dynamics weight Q, per-sensor output weights R."""

    P: np.ndarray
    Q: np.ndarray
    R: tuple

    def __post_init__(self):
        P = _frozen(self.P)
        Q = _frozen(self.Q)
        R = tuple(float(r) for r in np.atleast_1d(self.R))
        for name, W in (("P", P), ("Q", Q)):
            if W.ndim != 2 or W.shape[0] != W.shape[1]:
                raise WeightError(f"{name} must be square")
            if not np.allclose(W, W.T, atol=1e-12):
                raise WeightError(f"{name} must be symmetric")
            try:
                np.linalg.cholesky(W)
            except np.linalg.LinAlgError:
                raise WeightError(f"{name} is not positive definite") from None
        if any(r <= 0 for r in R):
            raise WeightError("output weights must be positive")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class QuadraticForm:
    """x' M x - 2 D' x + r over the stacked window states."""

    M: np.ndarray
    D: np.ndarray
    r: float

    def __post_init__(self):
        object.__setattr__(self, "M", _frozen(self.M))
        object.__setattr__(self, "D", _frozen(self.D))
        object.__setattr__(self, "r", float(self.r))


@dataclass(frozen=True)
class ConstraintPolyhedron:
    """Gamma chi <= gamma - margin over the first N window states.

    chi is the component-major stacking: with Xhat the N x n matrix whose
    rows are the estimates at the first N window instants, chi = vec(Xhat)
    (each state component's time series contiguous).
    """

    Gamma: np.ndarray
    gamma: np.ndarray
    margin: float

    def __post_init__(self):
        object.__setattr__(self, "Gamma", _frozen(self.Gamma))
        object.__setattr__(self, "gamma", _frozen(self.gamma))
        object.__setattr__(self, "margin", float(self.margin))


@dataclass(frozen=True)
class StabilityLedger:
    """Constants of the window error recursion
    ||e_{t-N}||_P^2 <= a1 ||e_{t-N-1}||_P^2 + a2 and its asymptote."""

    a1: float
    a2: float
    b1: float
    b2: float
    c1: float
    c2: float
    c3: float
    c4: float
    d1: float
    d2: float
    e_inf: float  # nan when a1 >= 1
    L_bar: float
    phi_bar: float
    delta: float


def _sensor_arrays(sys, sensors):
    C = np.ascontiguousarray(np.array([sys.C[s.row] for s in sensors], dtype=float))
    tau = np.array([s.threshold for s in sensors], dtype=float)
    return C, tau


def _window_arrays(sys, sensors, weights, window):
    N = window.N
    p = len(sensors)
    C, tau = _sensor_arrays(sys, sensors)
    R = np.array(weights.R, dtype=float)
    if R.shape[0] != p:
        raise WeightError("one output weight per sensor is required")
    Bu = np.zeros((N, sys.n))
    if sys.m:
        Bu = window.inputs @ sys.B.T
    mask = np.zeros((N + 1, p))
    for i, insts in enumerate(window.switch_sets):
        for h in insts:
            mask[h - 1, i] = 1.0
    tau_kp = np.broadcast_to(tau, (N + 1, p)).copy()
    return C, tau, R, np.ascontiguousarray(Bu), mask, tau_kp


def _blocks_to_dense(diag, E):
    K, n, _ = diag.shape
    M = np.zeros((K * n, K * n))
    for j in range(K):
        M[j * n : (j + 1) * n, j * n : (j + 1) * n] = diag[j]
        if j + 1 < K:
            M[j * n : (j + 1) * n, (j + 1) * n : (j + 2) * n] = E
            M[(j + 1) * n : (j + 2) * n, j * n : (j + 1) * n] = E.T
    return M


def lsmhe_block_data(sys, sensors, weights, window):
    """Normal-equation blocks of the switching-instant quadratic cost."""
    C, _, R, Bu, mask, tau_kp = _window_arrays(sys, sensors, weights, window)
    return kernels.window_quadratic_blocks(
        np.ascontiguousarray(sys.A),
        np.ascontiguousarray(weights.P),
        np.ascontiguousarray(weights.Q),
        np.asarray(window.xbar, dtype=float),
        Bu,
        C,
        R,
        tau_kp,
        mask,
    )


def assemble_lsmhe(sys, sensors, weights, window):
    """Dense quadratic form of the switching-instant window cost."""
    diag, E, D, r = lsmhe_block_data(sys, sensors, weights, window)
    return QuadraticForm(_blocks_to_dense(diag, E), D.ravel(), r)


def solve_lsmhe(form):
    """Closed-form window minimizer of an assembled quadratic form.

    Returns (flat estimates, optimal cost, report).  The stacked vector
    holds the N+1 window states oldest first; reshape to (N+1, n) with the
    caller's state dimension.
    """
    try:
        x, rep = solvers.cholesky_solve(form.M, form.D)
    except ConditioningError as e:
        e.condition_estimate = (
            e.condition_estimate
            if e.condition_estimate is not None
            else float(np.linalg.cond(form.M))
        )
        raise
    cost = form.r - float(form.D @ x)
    return x, cost, rep


def solve_lsmhe_window(sys, sensors, weights, window):
    """Closed-form window solve through the block-tridiagonal path.

    Identical minimizer to solve_lsmhe(assemble_lsmhe(...)) without
    materializing the dense matrix; used by the window-sliding drivers.
    """
    diag, E, D, r = lsmhe_block_data(sys, sensors, weights, window)
    X = solvers.block_solve(diag, E, D)
    cost = r - float(np.sum(D * X))
    return X, cost, SolveReport(1, 0.0, solvers.STATUS_CONVERGED, 0.0)


def pwmhe_cost_grad(sys, sensors, weights, window, estimates):
    """Cost and gradient of the piecewise-quadratic window objective.

    estimates: (N+1, n).  An output term and its gradient vanish exactly at
    the threshold seam, so the objective is continuously differentiable.
    """
    C, tau, R, Bu, _, _ = _window_arrays(sys, sensors, weights, window)
    X = np.ascontiguousarray(np.asarray(estimates, dtype=float))
    Y = np.ascontiguousarray(_hard_labels(window.outputs))
    return kernels.pwmhe_cost_grad(
        X,
        np.ascontiguousarray(sys.A),
        np.ascontiguousarray(weights.P),
        np.ascontiguousarray(weights.Q),
        np.asarray(window.xbar, dtype=float),
        Bu,
        C,
        tau,
        R,
        Y,
    )


def _hard_labels(outputs):
    Y = np.asarray(outputs, dtype=float)
    vals = set(np.unique(Y).tolist())
    if vals <= {0.0, 1.0}:
        return 2.0 * Y - 1.0
    return Y


def _propagated_start(sys, window):
    X = np.zeros((window.N + 1, sys.n))
    X[0] = window.xbar
    for k in range(window.N):
        u = window.inputs[k] if sys.m else np.zeros(0)
        X[k + 1] = step(sys, X[k], u, np.zeros(sys.n))
    return X


def _curvature_scale(sys, sensors, weights, window, X0):
    """Square roots of the diagonal curvature at the start, for preconditioning.

    Sensor terms contribute curvature only where they are active at ``X0``;
    including them everywhere would overestimate the stiffness of steps whose
    labels the start already satisfies, which is exactly where badly spread
    weights make unpreconditioned steps collapse.
    """
    C, tau, R, Bu, _, tau_kp = _window_arrays(sys, sensors, weights, window)
    Y = _hard_labels(window.outputs)
    s = X0 @ C.T - tau
    active = (s * Y < 0.0).astype(float)
    diag, _, _, _ = kernels.window_quadratic_blocks(
        np.ascontiguousarray(sys.A),
        np.ascontiguousarray(weights.P),
        np.ascontiguousarray(weights.Q),
        np.asarray(window.xbar, dtype=float),
        Bu,
        C,
        R,
        tau_kp,
        active,
    )
    d = np.concatenate([np.diag(diag[j]) for j in range(diag.shape[0])])
    return np.sqrt(np.maximum(d, 1e-16 * np.max(d)))


def _exact_line_step(sys, weights, C, tau, R, Y, N, n, barrier=None):
    """Closed-form 1-D minimizer along a ray of the piecewise cost.

    Restricted to a line, the objective is a convex C1 chain of parabolas
    whose breakpoints sit where a predicted output crosses its threshold.
    Walking the breakpoints with the running slope gives the exact step, so
    the line search never trips over a fit sampled in a steeper piece.

    With ``barrier = (emb, gam, mu_box)`` the ray objective gains the log
    wall -mu sum log(gam - emb x); the slope is then piecewise linear plus a
    monotone barrier term, so the unique root is bisected inside the feasible
    interval.  ``mu_box`` is a one-element list, re-read on every call, which
    lets the outer loop anneal mu without rebuilding the closure.
    """
    A = np.asarray(sys.A, dtype=float)
    P = np.asarray(weights.P, dtype=float)
    Q = np.asarray(weights.Q, dtype=float)

    def hint(xflat, dflat, gd):
        X = xflat.reshape(N + 1, n)
        D = dflat.reshape(N + 1, n)
        s0 = X @ C.T - tau
        ds = D @ C.T
        W = D[1:] - D[:-1] @ A.T
        curv = 2.0 * (D[0] @ P @ D[0] + float(np.einsum("kn,nm,km->", W, Q, W)))
        act = np.where(s0 != 0.0, s0 * Y < 0.0, ds * Y < 0.0)
        sens = 2.0 * R * ds * ds
        with np.errstate(divide="ignore", invalid="ignore"):
            ab = -s0 / ds

        if barrier is not None:
            emb, gam, mu_box = barrier
            mu = mu_box[0]
            bs = gam - emb @ xflat
            bd = emb @ dflat
            pos = bd > 0.0
            cap = np.inf
            if np.any(pos):
                cap = 0.999 * float(np.min(bs[pos] / bd[pos]))
            if not (cap > 0.0):
                return 0.0
            raw_gd = gd - mu * float(np.sum(bd / bs))
            crossing = (ds != 0.0) & (ab > 0.0)
            b_cross = np.where(crossing, ab, np.inf)

            def total_slope(a):
                # integral of the piecewise curvature up to a, term by term
                act_len = np.where(
                    crossing,
                    np.where(act, np.minimum(a, b_cross), np.maximum(0.0, a - b_cross)),
                    act * a,
                )
                v = raw_gd + curv * a + float(np.sum(sens * act_len))
                return v + mu * float(np.sum(bd / (bs - a * bd)))

            hi = min(cap, 1e18)
            if total_slope(hi) <= 0.0:
                return hi
            lo = 0.0
            for _ in range(90):
                mid = 0.5 * (lo + hi)
                if total_slope(mid) < 0.0:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)

        curv += float(np.sum(sens[act]))
        ks, cols = np.nonzero((ds != 0.0) & (ab > 1e-18))
        order = np.argsort(ab[ks, cols])
        slope = gd
        seg = 0.0
        for idx in order:
            k, i = ks[idx], cols[idx]
            if curv <= 0.0:
                return 1.0
            cand = seg - slope / curv
            b = ab[k, i]
            if cand <= b:
                return cand
            slope += curv * (b - seg)
            seg = b
            curv += -sens[k, i] if act[k, i] else sens[k, i]
            act[k, i] = not act[k, i]
        if curv <= 0.0:
            return 1.0
        return seg - slope / curv

    return hint


def chi_from_estimates(estimates, N):
    """Component-major stacking of the first N window states."""
    X = np.asarray(estimates, dtype=float)
    return X[:N].T.ravel()


def embed_constraints(poly, N, n):
    """Rewrite the polyhedron over the flat time-major window vector.

    The flat vector stacks the N+1 states oldest first; the polyhedron's
    component-major chi touches only the first N of them.
    """
    rows = poly.Gamma.shape[0]
    emb = np.zeros((rows, (N + 1) * n))
    for c in range(n):
        for h in range(N):
            emb[:, h * n + c] = poly.Gamma[:, c * N + h]
    return emb, poly.gamma - poly.margin


def solve_pwmhe(
    sys,
    sensors,
    weights,
    window,
    x_init=None,
    constraints=None,
    box=None,
    tol=OPT_TOL,
    max_iter=QN_MAX_ITER,
):
    """Iterative window minimizer of the piecewise-quadratic objective.

    Unconstrained by default; ``box`` (lo, hi arrays over the flat window
    vector) switches to projected iterations, ``constraints`` (a
    ConstraintPolyhedron) to a log-barrier loop with halving barrier
    weight.  Hitting the iteration cap raises a convergence error carrying
    the last iterate and its gradient norm.
    """
    N, n = window.N, sys.n
    C, tau, R, Bu, _, _ = _window_arrays(sys, sensors, weights, window)
    A = np.ascontiguousarray(sys.A)
    P = np.ascontiguousarray(weights.P)
    Q = np.ascontiguousarray(weights.Q)
    xbar = np.asarray(window.xbar, dtype=float)
    Y = np.ascontiguousarray(_hard_labels(window.outputs))

    def raw(xflat):
        cost, grad = kernels.pwmhe_cost_grad(
            np.ascontiguousarray(xflat.reshape(N + 1, n)), A, P, Q, xbar, Bu, C, tau, R, Y
        )
        return cost, grad.ravel()

    x0 = (
        np.asarray(x_init, dtype=float).ravel().copy()
        if x_init is not None
        else _propagated_start(sys, window).ravel()
    )
    scale = _curvature_scale(sys, sensors, weights, window, x0.reshape(N + 1, n))

    def piece_of(v):
        s = v.reshape(N + 1, n) @ C.T - tau
        return (s * Y < 0.0).tobytes()

    def rescale(v):
        return _curvature_scale(sys, sensors, weights, window, v.reshape(N + 1, n))

    hint = _exact_line_step(sys, weights, C, tau, R, Y, N, n)

    def polish(xflat, rounds=12):
        # endgame for the stalled line search: solve the active piece's
        # normal equations exactly, re-detect the piece, repeat; cost
        # comparisons can no longer resolve the remaining descent but the
        # factorization can
        x = xflat.reshape(N + 1, n).copy()
        tau_kp = np.broadcast_to(tau, (N + 1, len(sensors))).copy()
        for _ in range(rounds):
            f, g = raw(x.ravel())
            if float(np.linalg.norm(g)) <= tol:
                return x.ravel()
            s = x @ C.T - tau
            act = np.ascontiguousarray((s * Y < 0.0).astype(float))
            diag, E, D, _ = kernels.window_quadratic_blocks(
                A, P, Q, xbar, Bu, C, R, tau_kp, act
            )
            x_new = solvers.block_solve(diag, E, D)
            f_new, g_new = raw(x_new.ravel())
            if f_new <= f and float(np.linalg.norm(g_new)) <= tol:
                return x_new.ravel()
            d = (x_new - x).ravel()
            gd = float(np.dot(g, d))
            if gd >= 0.0:
                return None
            alpha = hint(x.ravel(), d, gd)
            if not (np.isfinite(alpha) and alpha > 0.0):
                return None
            x = x + min(alpha, 1.0) * d.reshape(N + 1, n)
        return None

    if constraints is None and box is None:
        try:
            x, rep = solvers.quasi_newton_min(
                raw,
                x0,
                tol=tol,
                max_iter=max_iter,
                scale=scale,
                piece_of=piece_of,
                rescale=rescale,
                step_hint=hint,
            )
        except ConvergenceError as err:
            x = polish(err.last_iterate)
            if x is None:
                raise
            _, g = raw(x)
            rep = SolveReport(
                max_iter, float(np.linalg.norm(g)), solvers.STATUS_CONVERGED, 0.0
            )
        cost, _ = raw(x)
        return x.reshape(N + 1, n), cost, rep

    if box is not None:
        lo, hi = (np.asarray(b, dtype=float) for b in box)

        def project(v):
            return np.clip(v, lo, hi)

        x, rep = solvers.quasi_newton_min(
            raw,
            x0,
            tol=tol,
            max_iter=max_iter,
            project=project,
            scale=scale,
            piece_of=piece_of,
            rescale=rescale,
            step_hint=hint,
        )
        cost, _ = raw(x)
        return x.reshape(N + 1, n), cost, rep

    emb, gam = embed_constraints(constraints, N, n)
    slack0 = gam - emb @ x0
    if np.any(slack0 <= 0.0):
        x0 = solvers._phase_one(emb, gam, x0)
    # anneal down to a per-row complementarity gap of about tol; the cost is
    # a sum of squares, so an absolute target never dwarfs the optimum
    mu_box = [tol * 2.0 ** (solvers.BARRIER_OUTER - 1)]
    fused_hint = _exact_line_step(
        sys, weights, C, tau, R, Y, N, n, barrier=(emb, gam, mu_box)
    )

    def fused(v):
        cost, grad = raw(v)
        s = gam - emb @ v
        if np.any(s <= 0.0):
            return np.inf, grad
        _mu = mu_box[0]
        return cost - _mu * float(np.sum(np.log(s))), grad + emb.T @ (_mu / s)

    def active_set_polish(xflat, rounds=12):
        # endgame once the barrier has identified which rows bind: at an
        # active wall the fused gradient is two near-canceling forces and
        # cannot be evaluated below the cancellation noise, while the active
        # piece's KKT system solves cleanly.  Every inverse-Hessian apply is
        # routed through the block-tridiagonal factorization; a dense solve
        # of the bordered system drifts along the soft directions of these
        # badly spread weights and its residual scales with that drift.
        m_rows = emb.shape[0]
        tau_kp = np.broadcast_to(tau, (N + 1, len(sensors))).copy()
        x = xflat.copy()
        bs = gam - emb @ x
        active = set(np.nonzero(bs <= 1e-5 * (1.0 + np.abs(gam)))[0].tolist())
        for _ in range(rounds):
            s = (x.reshape(N + 1, n) @ C.T - tau) * Y
            act = np.ascontiguousarray((s < 0.0).astype(float))
            diag, E, Dv, _ = kernels.window_quadratic_blocks(
                A, P, Q, xbar, Bu, C, R, tau_kp, act
            )

            def hsolve(rhs_flat):
                # H v = rhs with H twice the block-tridiagonal form
                return solvers.block_solve(
                    diag, E, 0.5 * rhs_flat.reshape(N + 1, n)
                ).ravel()

            def kkt_solve(rhs_x, rhs_rows, rows, Ga, VS):
                V, S = VS
                v = hsolve(rhs_x)
                if not rows:
                    return v, np.zeros(0)
                try:
                    lam = np.linalg.solve(S, Ga @ v - rhs_rows)
                except np.linalg.LinAlgError:
                    lam, *_ = np.linalg.lstsq(S, Ga @ v - rhs_rows, rcond=None)
                return v - V @ lam, lam

            z, lam, rows, Ga, VS = x, np.zeros(0), [], emb[:0], (None, None)
            try:
                for _inner in range(2 * m_rows + 2):
                    rows = sorted(active)
                    Ga = emb[rows]
                    V = (
                        np.stack([hsolve(emb[r]) for r in rows], axis=1)
                        if rows
                        else np.zeros(((N + 1) * n, 0))
                    )
                    VS = (V, Ga @ V)
                    z, lam = kkt_solve(2.0 * Dv.ravel(), gam[rows], rows, Ga, VS)
                    slack_z = gam - emb @ z
                    slack_z[rows] = 0.0
                    worst = int(np.argmin(slack_z))
                    if slack_z[worst] < -1e-11 * (1.0 + abs(gam[worst])):
                        active.add(worst)
                        continue
                    if lam.size and float(np.min(lam)) < -1e-10:
                        active.discard(rows[int(np.argmin(lam))])
                        continue
                    break
                else:
                    return None
            except ConditioningError:
                return None

            # refine against the residual-form gradient: near the minimizer
            # its subtractions are exact, so it sits orders below the
            # eps * |H| * |z| floor of the factorization residual; keep a
            # correction only while it shrinks the residual
            def kkt_norm(zv, lv):
                _, gv = raw(zv)
                rv = gv + Ga.T @ lv if lv.size else gv
                return float(np.linalg.norm(rv)), rv

            s_z = (z.reshape(N + 1, n) @ C.T - tau) * Y
            same_piece = bool(np.array_equal(s_z < 0.0, s < 0.0))
            for _refine in range(3 if same_piece else 0):
                rn, res_vec = kkt_norm(z, lam)
                if rn <= 0.1 * tol:
                    break
                try:
                    dz, dlam = kkt_solve(
                        -res_vec, -(emb[rows] @ z - gam[rows]), rows, Ga, VS
                    )
                except ConditioningError:
                    break
                z1 = z + dz
                lam1 = lam + dlam if lam.size else lam
                rn1, _ = kkt_norm(z1, lam1)
                if not rn1 < rn:
                    break
                z, lam = z1, lam1
            x = z
            # the certificate stands on its own: the cost is C1, so the raw
            # gradient at z is exact no matter which piece built the model
            _, g = raw(x)
            res = g + Ga.T @ lam if lam.size else g
            if (
                float(np.linalg.norm(res)) <= tol
                and float(np.min(gam - emb @ x))
                >= -1e-11 * float(1.0 + np.max(np.abs(gam)))
                and (not lam.size or float(np.min(lam)) >= -1e-10)
            ):
                return x, float(np.linalg.norm(res))
        return None

    total_iter = 0
    x = x0
    rep = None
    for stage in range(solvers.BARRIER_OUTER):
        last = stage == solvers.BARRIER_OUTER - 1
        stage_tol = tol if last else max(tol, mu_box[0] ** 0.5)
        try:
            x, rep = solvers.quasi_newton_min(
                fused,
                x,
                tol=stage_tol,
                max_iter=max_iter if last else min(max_iter, 80),
                scale=scale,
                piece_of=piece_of,
                rescale=rescale,
                step_hint=fused_hint,
            )
            total_iter += rep.iterations
        except ConvergenceError as e:
            x = e.last_iterate
            total_iter += max_iter
            if last:
                polished = active_set_polish(x)
                if polished is None:
                    raise
                x, kkt_res = polished
                rep = SolveReport(
                    total_iter, kkt_res, solvers.STATUS_CONVERGED, 0.0
                )
        if not last:
            mu_box[0] *= 0.5
    cost, _ = raw(x)
    rep = SolveReport(total_iter, rep.grad_norm, rep.status, rep.wall_time)
    return x.reshape(N + 1, n), cost, rep


def build_constraints(sys, sensors, window, margin=EPS_MARGIN):
    """Output-consistency polyhedron of a window's labels.

    Row block i covers sensor i's first N instants: a -1 label forces the
    predicted output below threshold + noise bound, a +1 label above
    threshold - noise bound.  Strictness is delegated to the margin.
    """
    N = window.N
    C, tau = _sensor_arrays(sys, sensors)
    p = C.shape[0]
    Y = _hard_labels(window.outputs)
    phi = -np.concatenate([Y[:N, i] for i in range(p)])
    Gamma = phi[:, None] * np.kron(C, np.eye(N))
    tvec = np.repeat(tau, N)
    vvec = np.repeat(np.array([s.noise_bound for s in sensors], dtype=float), N)
    gamma = phi * tvec + vvec
    return ConstraintPolyhedron(Gamma, gamma, margin)


def predict(sys, x_oldest, u_oldest):
    """Arrival prediction for the next window: one dynamics push."""
    u = np.asarray(u_oldest, dtype=float)
    return step(sys, x_oldest, u, np.zeros(sys.n))


def estimate_phi_bar(sys, sensors, outputs_run, N):
    """Calibration estimate of the disturbance-to-switching-output gain.

    Scans every complete window of a label run, builds for each sensor the
    matrix mapping stacked window disturbances to its switching outputs
    (blocks C_i A^(k-1-j)), and returns the largest spectral norm seen.
    """
    from .model import detect_switchings

    Y = _hard_labels(outputs_run)
    T, p = Y.shape
    n = sys.n
    powers = np.zeros((N, n, n))
    powers[0] = np.eye(n)
    for d in range(1, N):
        powers[d] = powers[d - 1] @ sys.A
    C, _ = _sensor_arrays(sys, sensors)
    rows = np.einsum("ia,dab->idb", C, powers)  # rows[i, d] = C_i A^d
    flips = Y[:-1] * Y[1:] < 0
    best = 0.0
    for t in range(N, T):
        for i in range(p):
            insts = np.nonzero(flips[t - N : t, i])[0]
            if insts.size == 0:
                continue
            Dm = np.zeros((insts.size, N * n))
            for a, k_loc in enumerate(insts):
                for j_loc in range(k_loc):
                    Dm[a, j_loc * n : (j_loc + 1) * n] = rows[i, k_loc - 1 - j_loc]
            if insts.size == 1:
                nrm = float(np.linalg.norm(Dm))
            else:
                nrm = float(np.linalg.norm(Dm, 2))
            if nrm > best:
                best = nrm
    return best


def stability_ledger(sys, sensors, weights, bounds, delta, N, phi_bar):
    """Constants of the error recursion for the piecewise-quadratic filter.

    When the contraction factor a1 reaches 1 the asymptote e_inf is
    reported as nan; everything else stays available for inspection.
    """
    P, Q = weights.P, weights.Q
    R = np.array(weights.R, dtype=float)
    p = len(sensors)
    C, _ = _sensor_arrays(sys, sensors)
    row_norms = np.linalg.norm(C, axis=1)
    L_bar = float(np.max(row_norms))
    C_bar = L_bar
    R_bar = float(np.max(R))
    R_min = float(np.min(R))
    lamP_min, lamP_max = solvers.sym_eig_bounds(P)
    lamQ_min, lamQ_max = solvers.sym_eig_bounds(Q)
    normA = solvers.spectral_norm(sys.A)
    normAmI = solvers.spectral_norm(sys.A - np.eye(sys.n))
    normB = solvers.spectral_norm(sys.B) if sys.m else 0.0

    d1 = 2.0 * p * phi_bar**2
    d2 = 3.0 * L_bar**2 / phi_bar**2 if phi_bar > 0 else 0.0
    b1 = (lamP_max / lamP_min) * (4.0 + d1 * (d2 + R_bar) / lamQ_min)
    b2 = 0.5 + delta**2 * R_min / (4.0 * lamP_max)
    a1 = b1 * normA**2 / b2
    c1 = p * (N + 1) * (4.0 * R_bar * C_bar**2 + 3.0 * L_bar**2)
    c2 = c1
    c3 = (
        b1
        + N * lamQ_max * (b1 / (2.0 * lamP_max) - 1.0)
        + p * R_bar * (4.0 * (N + 1) * C_bar**2 + phi_bar**2)
    )
    c4 = p * (N + 1) * R_bar * (b1 / (2.0 * lamP_max) - 1.0) + p * R_bar * (4.0 * N + 5.0)
    rho_v_bar = max(bounds.rho_V) if bounds.rho_V else 0.0
    a2 = (
        c1 * normAmI**2 * bounds.rho_X**2
        + c2 * normB**2 * bounds.rho_U**2
        + c3 * bounds.rho_W**2
        + c4 * rho_v_bar**2
    ) / b2
    e_inf = math.sqrt(a2 / (1.0 - a1)) if a1 < 1.0 else float("nan")
    return StabilityLedger(
        a1, a2, b1, b2, c1, c2, c3, c4, d1, d2, e_inf, L_bar, phi_bar, delta
    )


def tune_epsilon(sys, sensors, P_bar, weights, bounds, delta, N, phi_bar):
    """Largest power of ten for the arrival-weight scale with a1 < 1.

    The arrival weight is epsilon * P_bar; shrinking epsilon strengthens
    the switching-information term relative to the prior and drives the
    contraction factor below one whenever the observability measure is
    positive.
    """
    if delta <= 0.0:
        raise ObservabilityError(
            "arrival-weight tuning requires a positive observability measure"
        )
    for e in range(6, -41, -1):
        eps = 10.0**e
        w = MheWeights(eps * np.asarray(P_bar, dtype=float), weights.Q, weights.R)
        led = stability_ledger(sys, sensors, w, bounds, delta, N, phi_bar)
        if led.a1 < 1.0:
            return eps
    raise ObservabilityError("no power of ten achieves contraction")


class MovingHorizonFilter:
    """Window-sliding driver for the deterministic estimators.

    Feed labels (and the input applied since the previous instant); once a
    full window is buffered every step solves one window problem.  The
    arrival prediction follows the one-step push of the oldest smoothed
    estimate.
    """

    def __init__(
        self,
        sys,
        sensors,
        weights,
        N,
        xbar0,
        method="lsmhe",
        constrained=False,
        margin=EPS_MARGIN,
    ):
        if method not in ("lsmhe", "pwmhe"):
            raise ValueError("method must be lsmhe or pwmhe")
        self.sys = sys
        self.sensors = sensors
        self.weights = weights
        self.N = N
        self.method = method
        self.constrained = constrained
        self.margin = margin
        self._xbar = np.asarray(xbar0, dtype=float).copy()
        self._inputs = []
        self._outputs = []
        self._warm = None
        self.failures = 0
        self.windows = 0

    def feed(self, y, u=None):
        """Push one instant; returns (N+1, n) smoothed estimates or None.

        y: labels at the new instant; u: input applied between the previous
        instant and this one (ignored for autonomous systems).
        """
        from .model import make_window

        if self._outputs:
            self._inputs.append(
                np.zeros(self.sys.m) if u is None else np.asarray(u, dtype=float)
            )
        self._outputs.append(np.asarray(y, dtype=float))
        if len(self._outputs) < self.N + 1:
            return None
        inputs = np.array(self._inputs[-self.N :])
        outputs = np.array(self._outputs[-(self.N + 1) :])
        window = make_window(inputs, outputs, self._xbar)
        self.windows += 1
        if self.method == "lsmhe" and not self.constrained:
            X, _, _ = solve_lsmhe_window(self.sys, self.sensors, self.weights, window)
        elif self.method == "lsmhe":
            form = assemble_lsmhe(self.sys, self.sensors, self.weights, window)
            poly = build_constraints(self.sys, self.sensors, window, self.margin)
            emb, gam = embed_constraints(poly, self.N, self.sys.n)
            x, _ = solvers.barrier_qp(2.0 * form.M, -2.0 * form.D, emb, gam)
            X = x.reshape(self.N + 1, self.sys.n)
        else:
            warm = self._warm
            kwargs = {}
            if self.constrained:
                kwargs["constraints"] = build_constraints(
                    self.sys, self.sensors, window, self.margin
                )
            try:
                X, _, _ = solve_pwmhe(
                    self.sys, self.sensors, self.weights, window, x_init=warm, **kwargs
                )
            except ConvergenceError as e:
                self.failures += 1
                X = e.last_iterate.reshape(self.N + 1, self.sys.n)
        u_old = inputs[0] if self.sys.m else np.zeros(0)
        self._xbar = predict(self.sys, X[0], u_old)
        nxt = step(
            self.sys,
            X[-1],
            np.zeros(self.sys.m) if self.sys.m else np.zeros(0),
            np.zeros(self.sys.n),
        )
        self._warm = np.vstack([X[1:], nxt[None, :]])
        return X
