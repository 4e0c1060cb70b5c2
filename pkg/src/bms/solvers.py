"""Dense numeric workhorses: factorizations, minimization, seeded randomness.

All tolerances come from :mod:`bms.tolerances`.  Dense linear algebra is
delegated to numpy's LAPACK bindings; every shipped problem size stays well
inside dense territory (the largest factorized block is under a thousand
rows).
"""

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConditioningError, ConvergenceError, InfeasibleError
from .tolerances import (
    ARMIJO_C,
    BACKTRACK,
    BARRIER_OUTER,
    OPT_TOL,
    QN_MAX_ITER,
    SOLVE_TOL,
)

STATUS_CONVERGED = "converged"
STATUS_ITERATION_CAP = "iteration-cap"
STATUS_CONDITIONING = "conditioning"


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a numeric solve."""

    iterations: int
    grad_norm: float
    status: str
    wall_time: float


def _first_bad_pivot(A):
    """Locate the first non-positive Cholesky pivot of a symmetric matrix."""
    n = A.shape[0]
    L = np.zeros_like(A)
    for c in range(n):
        s = A[c, c] - L[c, :c] @ L[c, :c]
        if s <= 0.0:
            return c
        L[c, c] = np.sqrt(s)
        L[c + 1 :, c] = (A[c + 1 :, c] - L[c + 1 :, :c] @ L[c, :c]) / L[c, c]
    return -1


def cholesky_solve(A, b):
    """Solve A x = b for symmetric positive definite A.

    One step of iterative refinement keeps the residual at or below
    SOLVE_TOL * ||b|| on well-conditioned inputs.  A failed factorization
    raises a conditioning error that names the offending pivot.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    start = time.perf_counter()
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        pivot = _first_bad_pivot(A)
        cond = float(np.linalg.cond(A)) if A.size else float("inf")
        raise ConditioningError(
            f"Cholesky factorization failed at pivot {pivot}",
            pivot_index=pivot,
            condition_estimate=cond,
        ) from None
    x = _chol_substitute(L, b)
    # one refinement pass
    r = b - A @ x
    x = x + _chol_substitute(L, r)
    res = float(np.linalg.norm(b - A @ x))
    wall = time.perf_counter() - start
    return x, SolveReport(1, res, STATUS_CONVERGED, wall)


def _chol_substitute(L, b):
    y = np.linalg.solve(L, b)
    return np.linalg.solve(L.T, y)


def sym_eig_bounds(A):
    """(lambda_min, lambda_max) of a symmetric matrix."""
    w = np.linalg.eigvalsh(np.asarray(A, dtype=float))
    return float(w[0]), float(w[-1])


def spectral_norm(A):
    return float(np.linalg.norm(np.asarray(A, dtype=float), 2))


def block_solve(diag, E, rhs):
    """Cholesky solve of a block-tridiagonal system via the compiled kernel.

    Raises a conditioning error naming the failed pivot block otherwise.
    """
    x, fail = kernels.block_tridiag_solve(diag, E, rhs)
    if fail >= 0:
        raise ConditioningError(
            f"block Cholesky failed in diagonal block {fail}", pivot_index=int(fail)
        )
    return x


def block_solve_dense(diag, E, rhs):
    """Block Cholesky solve routed through LAPACK, for large blocks.

    Same system as block_solve: diag (K, n, n) diagonal blocks, constant
    superdiagonal block E, rhs (K, n).  One factorization of the whole
    matrix, performed block row by block row.
    """
    K, n = rhs.shape
    Ls = []
    Ws = [None]
    W = None
    for j in range(K):
        T = diag[j].copy()
        if W is not None:
            T -= W @ W.T
        try:
            L = np.linalg.cholesky(T)
        except np.linalg.LinAlgError:
            raise ConditioningError(
                f"block Cholesky failed in diagonal block {j}", pivot_index=j
            ) from None
        Ls.append(L)
        if j + 1 < K:
            W = np.linalg.solve(L, E).T  # W L' = E'
            Ws.append(W)
    y = np.empty_like(rhs)
    for j in range(K):
        b = rhs[j] if j == 0 else rhs[j] - Ws[j] @ y[j - 1]
        y[j] = np.linalg.solve(Ls[j], b)
    x = np.empty_like(rhs)
    for j in range(K - 1, -1, -1):
        b = y[j] if j == K - 1 else y[j] - Ws[j + 1].T @ x[j + 1]
        x[j] = np.linalg.solve(Ls[j].T, b)
    return x


def quasi_newton_min(
    fun,
    x0,
    tol=OPT_TOL,
    max_iter=QN_MAX_ITER,
    project=None,
    memory=20,
    scale=None,
    piece_of=None,
    rescale=None,
    step_hint=None,
):
    """Limited-memory quasi-Newton minimization with Armijo backtracking.

    ``fun(x) -> (cost, grad)``.  ``project`` (optional) maps a trial point
    back into a feasible set; with it the stationarity test uses the
    projected gradient step.  ``scale`` (optional, positive per-coordinate)
    preconditions badly scaled problems; it changes the iterates' path, not
    the stationary point.

    Piecewise-quadratic objectives poison the curvature memory whenever a
    step crosses a seam: pairs from different pieces describe different
    quadratics.  ``piece_of`` (optional, x -> hashable) identifies the
    active piece; on a piece change the memory is dropped and ``rescale``
    (optional, x -> new scale) refreshes the preconditioner.
    ``step_hint`` (optional, (x, d, gd) -> alpha) proposes the trial step
    length; without it a one-point quadratic fit is tried.  A quadratic fit
    through a sample in a steeper neighboring piece can shrink the step by
    many orders of magnitude, so callers that know the seam structure should
    supply the exact proposal.  Either proposal is still vetted by the
    Armijo test.

    Raises a convergence error carrying the last iterate if the cap is hit.
    """
    start = time.perf_counter()
    x = np.asarray(x0, dtype=float).copy()
    if project is not None:
        x = project(x)
    if scale is None:
        scale = np.ones_like(x)
    inv_scale = 1.0 / scale

    f, g = fun(x)
    s_list, y_list, rho_list = [], [], []
    iterations = 0
    piece = piece_of(x) if piece_of is not None else None
    stalled = 0

    def grad_measure(xc, gc):
        if project is None:
            return float(np.linalg.norm(gc))
        # norm of the projected gradient step
        return float(np.linalg.norm(xc - project(xc - gc)))

    gnorm = grad_measure(x, g)
    while gnorm > tol and iterations < max_iter:
        # two-loop recursion in the scaled metric
        q = g * inv_scale
        alphas = []
        for si, yi, ri in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
            ai = ri * np.dot(si, q)
            alphas.append(ai)
            q = q - ai * yi
        if y_list:
            yy = np.dot(y_list[-1], y_list[-1])
            q = q * (np.dot(s_list[-1], y_list[-1]) / yy)
        for (si, yi, ri), ai in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
            bi = ri * np.dot(yi, q)
            q = q + (ai - bi) * si
        d = -q * inv_scale

        gd = float(np.dot(g, d))
        if gd >= 0.0:
            d = -g * inv_scale * inv_scale
            gd = float(np.dot(g, d))
            s_list, y_list, rho_list = [], [], []

        # trial step, then Armijo halving
        if step_hint is not None:
            alpha = step_hint(x, d, gd)
            if not (np.isfinite(alpha) and alpha > 0.0):
                alpha = 1.0
            x1 = x + alpha * d if project is None else project(x + alpha * d)
            f1, g1 = fun(x1)
        else:
            alpha = 1.0
            x1 = x + alpha * d if project is None else project(x + alpha * d)
            f1, g1 = fun(x1)
            denom = f1 - f - gd
            if denom > 0.0:
                afit = -0.5 * gd / denom
                if 0.0 < afit < 4.0 and abs(afit - 1.0) > 1e-3:
                    xf = x + afit * d if project is None else project(x + afit * d)
                    ff, gf = fun(xf)
                    if ff < f1:
                        alpha, x1, f1, g1 = afit, xf, ff, gf
        halvings = 0
        while f1 > f + ARMIJO_C * alpha * gd and halvings < 60:
            alpha *= BACKTRACK
            x1 = x + alpha * d if project is None else project(x + alpha * d)
            f1, g1 = fun(x1)
            halvings += 1

        made_progress = f - f1 > 4.0 * np.finfo(float).eps * max(1.0, abs(f))
        if f1 > f or not made_progress:
            if s_list:
                # retry from a clean steepest-descent state before giving up
                s_list, y_list, rho_list = [], [], []
                if rescale is not None:
                    scale = rescale(x)
                    inv_scale = 1.0 / scale
                iterations += 1
                continue
            stalled += 1
            if f1 > f or stalled >= 3:
                break  # no measurable decrease: numerically stationary
        else:
            stalled = 0

        s_vec = (x1 - x) * scale
        y_vec = (g1 - g) * inv_scale
        sy = float(np.dot(s_vec, y_vec))
        if sy > 1e-12 * float(np.linalg.norm(s_vec)) * float(np.linalg.norm(y_vec)):
            s_list.append(s_vec)
            y_list.append(y_vec)
            rho_list.append(1.0 / sy)
            if len(s_list) > memory:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)
        x, f, g = x1, f1, g1
        if piece_of is not None:
            piece1 = piece_of(x)
            if piece1 != piece:
                piece = piece1
                s_list, y_list, rho_list = [], [], []
                if rescale is not None:
                    scale = rescale(x)
                    inv_scale = 1.0 / scale
        gnorm = grad_measure(x, g)
        iterations += 1

    wall = time.perf_counter() - start
    if gnorm > tol:
        raise ConvergenceError(
            f"quasi-Newton hit the {max_iter}-iteration cap at gradient norm {gnorm:.3e}",
            last_iterate=x,
            grad_norm=gnorm,
        )
    return x, SolveReport(iterations, gnorm, STATUS_CONVERGED, wall)


def _barrier_newton(H, f, Gamma, gamma, x, mu, tol, cap=80):
    """Newton centering for 0.5 x'Hx + f'x - mu * sum log(gamma - Gamma x)."""
    for it in range(cap):
        s = gamma - Gamma @ x
        inv_s = 1.0 / s
        grad = H @ x + f + Gamma.T @ (mu * inv_s)
        Hbar = H + Gamma.T @ ((mu * inv_s * inv_s)[:, None] * Gamma)
        try:
            L = np.linalg.cholesky(Hbar)
        except np.linalg.LinAlgError:
            Hbar = Hbar + (1e-12 * np.trace(Hbar) / Hbar.shape[0]) * np.eye(
                Hbar.shape[0]
            )
            L = np.linalg.cholesky(Hbar)
        dx = -_chol_substitute(L, grad)
        lam2 = float(-grad @ dx)
        if lam2 <= tol * tol:
            return x, it
        # fraction to boundary
        Gd = Gamma @ dx
        alpha = 1.0
        pos = Gd > 0
        if np.any(pos):
            alpha = min(1.0, 0.99 * float(np.min(s[pos] / Gd[pos])))
        phi0 = 0.5 * x @ H @ x + f @ x - mu * float(np.sum(np.log(s)))
        gd = float(grad @ dx)
        while alpha > 1e-14:
            x1 = x + alpha * dx
            s1 = gamma - Gamma @ x1
            if np.all(s1 > 0):
                phi1 = 0.5 * x1 @ H @ x1 + f @ x1 - mu * float(np.sum(np.log(s1)))
                if phi1 <= phi0 + ARMIJO_C * alpha * gd:
                    break
            alpha *= BACKTRACK
        x = x + alpha * dx
    return x, cap


def _phase_one(Gamma, gamma, x0):
    """Find a strictly feasible point near x0, or raise.

    Augmented problem over (x, t): minimize t + 0.5 rho |x - x0|^2 subject
    to Gamma x - gamma <= t.  Bare max-violation minimization is unbounded
    whenever the polyhedron has open recession directions, and its iterates
    drift arbitrarily deep; the proximal term pins the answer to the caller's
    neighborhood, which is all a barrier warm start needs.
    """
    x = np.asarray(x0, dtype=float).copy()
    s = gamma - Gamma @ x
    if np.all(s > 0):
        return x
    m, n = Gamma.shape
    t = float(-np.min(s) + 1.0)
    Ga = np.hstack([Gamma, -np.ones((m, 1))])
    z = np.concatenate([x, [t]])
    rho = 1.0 / max(1.0, float(x @ x))
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = rho * np.eye(n)
    f = np.concatenate([-rho * x, [1.0]])
    mu = 1.0
    for _ in range(40):
        z, _ = _barrier_newton(H, f, Ga, gamma, z, mu, 1e-10)
        if z[-1] < -1e-9:
            xs = z[:n]
            if np.all(gamma - Gamma @ xs > 0):
                return xs
        mu *= 0.25
        if mu < 1e-12:
            break
    raise InfeasibleError("constraint polyhedron has no strictly feasible point")


def barrier_qp(H, f, Gamma=None, gamma=None, x0=None, mu0=1e-4):
    """Minimize 0.5 x'Hx + f'x subject to Gamma x <= gamma.

    Log-barrier method: the barrier weight starts at mu0 and is halved a
    fixed number of times, each stage recentered with damped Newton steps.
    Without constraints this reduces to a single Cholesky solve.
    """
    H = np.asarray(H, dtype=float)
    f = np.asarray(f, dtype=float)
    start = time.perf_counter()
    if Gamma is None or gamma is None or Gamma.shape[0] == 0:
        x, rep = cholesky_solve(H, -f)
        return x, SolveReport(
            rep.iterations, rep.grad_norm, rep.status, time.perf_counter() - start
        )
    Gamma = np.asarray(Gamma, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if x0 is None:
        x0 = np.zeros(H.shape[0])
    x = _phase_one(Gamma, gamma, x0)
    mu = mu0
    total_it = 0
    for _ in range(BARRIER_OUTER):
        x, it = _barrier_newton(H, f, Gamma, gamma, x, mu, 0.1 * OPT_TOL)
        total_it += it
        mu *= 0.5
    s = gamma - Gamma @ x
    kkt = float(np.linalg.norm(H @ x + f + Gamma.T @ (mu * 2.0 / s), np.inf))
    wall = time.perf_counter() - start
    return x, SolveReport(total_it, kkt, STATUS_CONVERGED, wall)


def seeded_rng(seed):
    """Deterministic generator for a given integer seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def child_seeds(seed, count):
    """Per-trial child seeds via the seed-sequence spawn split."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(count)]


def residual_ok(A, x, b):
    """Check the SOLVE_TOL residual contract."""
    return float(np.linalg.norm(A @ x - b)) <= SOLVE_TOL * max(
        1e-300, float(np.linalg.norm(b))
    )
