"""Hot numeric kernels.

Every function here is written in numba-compilable Python over float64
arrays and gets wrapped by :func:`bms._backend.maybe_jit`, so the same
source runs compiled (numba backend) or interpreted (numpy backend).
Layout conventions shared by all window kernels:

* window estimates ``X`` are ``(N+1, n)``: row ``k`` is the state at the
  k-th window instant, row 0 the oldest;
* precomputed input pushes ``Bu`` are ``(N, n)``: ``Bu[k] = B @ u_k``;
* sensor rows ``C`` are ``(p, n)``, thresholds/variances are ``(p,)``;
* labels ``Y`` are ``(N+1, p)`` floats (+1/-1 for hard labels, 0/1 for
  probabilistic ones).
"""

import math

import numpy as np

from ._backend import maybe_jit

_SQRT1_2 = 0.7071067811865476
_LOG_2PI = 1.8378770664093453
_ASYMPTOTIC_CUT = 8.0


@maybe_jit
def log_tail(s):
    """log of the standard normal upper-tail probability log Q(s).

    Uses the complementary error function up to s = 8 and a log-domain
    asymptotic series beyond, so the result stays finite and accurate far
    outside the range where Q(s) underflows.
    """
    if s > _ASYMPTOTIC_CUT:
        # Q(s) = phi(s)/s * (1 - 1/s^2 + 3/s^4 - 15/s^6 + ...)
        s2 = s * s
        term = 1.0
        total = 1.0
        prev = 1.0
        k = 1
        while k <= 60:
            term *= -(2.0 * k - 1.0) / s2
            mag = abs(term)
            if mag >= prev:
                break
            total += term
            prev = mag
            if mag < 1e-17:
                break
            k += 1
        return -0.5 * s2 - 0.5 * _LOG_2PI - math.log(s) + math.log(total)
    return math.log(0.5 * math.erfc(s * _SQRT1_2))


@maybe_jit
def log_tail_grid(s):
    out = np.empty(s.shape[0])
    for i in range(s.shape[0]):
        out[i] = log_tail(s[i])
    return out


@maybe_jit
def tail_ratio(s):
    """Hazard ratio phi(s)/Q(s), computed in the log domain for stability."""
    return math.exp(-0.5 * s * s - 0.5 * _LOG_2PI - log_tail(s))


@maybe_jit
def pwmhe_cost_grad(X, A, P, Q, xbar, Bu, C, tau, R, Y):
    """Cost and gradient of the piecewise-quadratic window objective.

    prior + dynamics + one-sided output terms: an output term at instant k
    for sensor i is active only when the predicted output C_i x_k sits on
    the wrong side of the threshold relative to the observed label.
    """
    K = X.shape[0]
    n = X.shape[1]
    p = C.shape[0]
    grad = np.zeros((K, n))

    d0 = X[0] - xbar
    Pd = np.dot(P, d0)
    cost = np.dot(d0, Pd)
    for a in range(n):
        grad[0, a] += 2.0 * Pd[a]

    for k in range(K - 1):
        w = X[k + 1] - np.dot(A, X[k]) - Bu[k]
        Qw = np.dot(Q, w)
        cost += np.dot(w, Qw)
        AtQw = np.dot(Qw, A)
        for a in range(n):
            grad[k + 1, a] += 2.0 * Qw[a]
            grad[k, a] -= 2.0 * AtQw[a]

    for k in range(K):
        for i in range(p):
            s = np.dot(C[i], X[k]) - tau[i]
            if s * Y[k, i] < 0.0:
                cost += R[i] * s * s
                coef = 2.0 * R[i] * s
                for a in range(n):
                    grad[k, a] += coef * C[i, a]
    return cost, grad


@maybe_jit
def map_cost_grad(X, A, Psi, G, xbar, Bu, C, tau, sqrt_r, Y):
    """Cost and gradient of the negative-log-posterior window objective.

    prior + dynamics + Bernoulli log-likelihoods of the binary labels,
    where P(y=1 | x) = Q((tau - C x)/sqrt(r)).
    """
    K = X.shape[0]
    n = X.shape[1]
    p = C.shape[0]
    grad = np.zeros((K, n))

    d0 = X[0] - xbar
    Pd = np.dot(Psi, d0)
    cost = np.dot(d0, Pd)
    for a in range(n):
        grad[0, a] += 2.0 * Pd[a]

    for k in range(K - 1):
        w = X[k + 1] - np.dot(A, X[k]) - Bu[k]
        Gw = np.dot(G, w)
        cost += np.dot(w, Gw)
        AtGw = np.dot(Gw, A)
        for a in range(n):
            grad[k + 1, a] += 2.0 * Gw[a]
            grad[k, a] -= 2.0 * AtGw[a]

    for k in range(K):
        for i in range(p):
            s = (tau[i] - np.dot(C[i], X[k])) / sqrt_r[i]
            if Y[k, i] > 0.5:
                cost -= log_tail(s)
                dll_ds = -tail_ratio(s)
            else:
                cost -= log_tail(-s)
                dll_ds = tail_ratio(-s)
            coef = dll_ds / sqrt_r[i]
            for a in range(n):
                grad[k, a] += coef * C[i, a]
    return cost, grad


@maybe_jit
def window_quadratic_blocks(A, P, Q, xbar, Bu, C, R, tau_kp, mask):
    """Block-tridiagonal normal equations of a quadratic window cost.

    The cost is  (x_0-xbar)'P(x_0-xbar) + sum_k ||x_{k+1}-A x_k-Bu_k||_Q^2
    + sum_{k,i} mask[k,i] R_i (C_i x_k - tau_kp[k,i])^2, written as
    x'Mx - 2D'x + r.  Returns the diagonal blocks of M, the constant
    superdiagonal block E (subdiagonal is E'), D and r.
    """
    K = mask.shape[0]
    n = A.shape[0]
    p = C.shape[0]

    At = np.ascontiguousarray(A.T)
    AtQ = np.dot(At, Q)
    AtQA = np.dot(AtQ, A)
    E = -AtQ  # block M[k, k+1]

    diag = np.zeros((K, n, n))
    D = np.zeros((K, n))
    r = np.dot(xbar, np.dot(P, xbar))

    for j in range(K):
        if j == 0:
            for a in range(n):
                for b in range(n):
                    diag[0, a, b] = P[a, b] + AtQA[a, b]
        elif j < K - 1:
            for a in range(n):
                for b in range(n):
                    diag[j, a, b] = Q[a, b] + AtQA[a, b]
        else:
            for a in range(n):
                for b in range(n):
                    diag[j, a, b] = Q[a, b]
        for i in range(p):
            if mask[j, i] > 0.5:
                t = tau_kp[j, i]
                for a in range(n):
                    ca = R[i] * C[i, a]
                    D[j, a] += t * ca
                    for b in range(n):
                        diag[j, a, b] += ca * C[i, b]
                r += R[i] * t * t

    Pxbar = np.dot(P, xbar)
    for a in range(n):
        D[0, a] += Pxbar[a]
    for k in range(K - 1):
        QBu = np.dot(Q, Bu[k])
        AtQBu = np.dot(QBu, A)
        r += np.dot(Bu[k], QBu)
        for a in range(n):
            D[k, a] -= AtQBu[a]
            D[k + 1, a] += QBu[a]
    return diag, E, D, r


@maybe_jit
def block_tridiag_solve(diag, E, rhs):
    """Cholesky solve of a symmetric block-tridiagonal system.

    diag: (K, n, n) diagonal blocks, E: (n, n) constant superdiagonal block
    (the subdiagonal is E'), rhs: (K, n).  Returns the solution and the
    index of the first non-positive pivot block, -1 on success.
    """
    K = diag.shape[0]
    n = diag.shape[1]
    L = np.zeros((K, n, n))
    W = np.zeros((K, n, n))  # W[j] with W[j] L[j-1]' = E' (j >= 1)
    x = np.zeros((K, n))

    T = np.zeros((n, n))
    for j in range(K):
        for a in range(n):
            for b in range(n):
                T[a, b] = diag[j, a, b]
        if j > 0:
            for a in range(n):
                for b in range(n):
                    acc = 0.0
                    for c in range(n):
                        acc += W[j, a, c] * W[j, b, c]
                    T[a, b] -= acc
        # dense Cholesky of T into L[j]
        for c in range(n):
            s = T[c, c]
            for k2 in range(c):
                s -= L[j, c, k2] * L[j, c, k2]
            if s <= 0.0:
                return x, j
            L[j, c, c] = math.sqrt(s)
            for r2 in range(c + 1, n):
                v = T[r2, c]
                for k2 in range(c):
                    v -= L[j, r2, k2] * L[j, c, k2]
                L[j, r2, c] = v / L[j, c, c]
        if j + 1 < K:
            # solve W[j+1] L[j]' = E'  row by row: L[j] w_row' = E[:, row]
            for rrow in range(n):
                for c in range(n):
                    v = E[c, rrow]
                    for k2 in range(c):
                        v -= L[j, c, k2] * W[j + 1, rrow, k2]
                    W[j + 1, rrow, c] = v / L[j, c, c]

    y = np.zeros((K, n))
    for j in range(K):
        for a in range(n):
            v = rhs[j, a]
            if j > 0:
                for c in range(n):
                    v -= W[j, a, c] * y[j - 1, c]
            for c in range(a):
                v -= L[j, a, c] * y[j, c]
            y[j, a] = v / L[j, a, a]
    for j in range(K - 1, -1, -1):
        for a in range(n - 1, -1, -1):
            v = y[j, a]
            if j + 1 < K:
                for c in range(n):
                    v -= W[j + 1, c, a] * x[j + 1, c]
            for c in range(a + 1, n):
                v -= L[j, c, a] * x[j, c]
            x[j, a] = v / L[j, a, a]
    return x, -1


@maybe_jit
def simulate_lti(A, x0, Bu, W):
    """Roll x_{k+1} = A x_k + Bu_k + W_k over the rows of Bu/W."""
    T = Bu.shape[0]
    n = x0.shape[0]
    X = np.zeros((T + 1, n))
    for a in range(n):
        X[0, a] = x0[a]
    for k in range(T):
        xn = np.dot(A, X[k]) + Bu[k] + W[k]
        for a in range(n):
            X[k + 1, a] = xn[a]
    return X


@maybe_jit
def min_delta_over_windows(powrows, switch, N):
    """Smallest window observability measure over a finished run.

    powrows: (p, N, n) with powrows[i, d] = C_i A^d; switch: (T, p) floats,
    1.0 where instant k starts a sign change for sensor i.  For every window
    ending at t in [N, T-1] the gramian of the switching rows is formed and
    the minimum sqrt(lambda_min) over windows is returned.  A window without
    switchings pins the measure to zero.
    """
    T = switch.shape[0]
    p = switch.shape[1]
    n = powrows.shape[2]
    best = 1e300
    for t in range(N, T):
        G = np.zeros((n, n))
        count = 0
        for i in range(p):
            for k in range(t - N, t):
                if switch[k, i] > 0.5:
                    d = k - (t - N)
                    for a in range(n):
                        ra = powrows[i, d, a]
                        for b in range(n):
                            G[a, b] += ra * powrows[i, d, b]
                    count += 1
        if count == 0:
            return 0.0
        lam = np.linalg.eigvalsh(G)[0]
        if lam < 0.0:
            lam = 0.0
        d2 = math.sqrt(lam)
        if d2 < best:
            best = d2
    return best


@maybe_jit
def fem_assemble_dense(vertices, triangles, lam):
    """Mass and stiffness assembly for linear triangle elements.

    Local stiffness entries are lam * area * (grad_a . grad_b); local mass
    is area/12 * [[2,1,1],[1,2,1],[1,1,2]].  Returns full (V, V) matrices
    over all vertices; block splitting happens in the caller.
    """
    V = vertices.shape[0]
    T = triangles.shape[0]
    M = np.zeros((V, V))
    S = np.zeros((V, V))
    bx = np.zeros(3)
    by = np.zeros(3)
    idx = np.zeros(3, dtype=np.int64)
    for t in range(T):
        idx[0] = triangles[t, 0]
        idx[1] = triangles[t, 1]
        idx[2] = triangles[t, 2]
        x1 = vertices[idx[0], 0]
        y1 = vertices[idx[0], 1]
        x2 = vertices[idx[1], 0]
        y2 = vertices[idx[1], 1]
        x3 = vertices[idx[2], 0]
        y3 = vertices[idx[2], 1]
        det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
        area = 0.5 * det
        bx[0] = (y2 - y3) / det
        by[0] = (x3 - x2) / det
        bx[1] = (y3 - y1) / det
        by[1] = (x1 - x3) / det
        bx[2] = (y1 - y2) / det
        by[2] = (x2 - x1) / det
        for a in range(3):
            ga = idx[a]
            for b in range(3):
                gb = idx[b]
                S[ga, gb] += lam * area * (bx[a] * bx[b] + by[a] * by[b])
                if a == b:
                    M[ga, gb] += area / 6.0
                else:
                    M[ga, gb] += area / 12.0
    return M, S
