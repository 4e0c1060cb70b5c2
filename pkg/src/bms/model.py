"""Discrete-time linear models observed through binary threshold sensors.

The estimation problems in this package consume three ingredients: a linear
system x_{k+1} = A x_k + B u_k + w_k, a bank of threshold sensors that
report only sign information y^i = sign(C^i x + v^i - tau^i), and a sliding
window of inputs/labels.  Everything here is immutable and side-effect
free; arrays are defensively copied and frozen at construction.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError


def _frozen(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ContinuousModel:
    """Continuous-time dynamics dx/dt = Ac x + Bc u sampled every Ts seconds."""

    Ac: np.ndarray
    Bc: np.ndarray
    Ts: float

    def __post_init__(self):
        Ac = _frozen(self.Ac)
        Bc = _frozen(self.Bc)
        if Ac.ndim != 2 or Ac.shape[0] != Ac.shape[1]:
            raise ModelError("Ac must be square")
        if Bc.ndim != 2 or Bc.shape[0] != Ac.shape[0]:
            raise ModelError("Bc must have one row per state")
        if not self.Ts > 0:
            raise ModelError("sampling period must be positive")
        object.__setattr__(self, "Ac", Ac)
        object.__setattr__(self, "Bc", Bc)


@dataclass(frozen=True)
class LinearSystem:
    """x_{k+1} = A x_k + B u_k + w_k with stacked output rows C."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = _frozen(self.A)
        B = _frozen(self.B)
        C = _frozen(self.C)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ModelError("A must be square")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise ModelError("B must have one row per state")
        if C.ndim != 2 or C.shape[1] != A.shape[0]:
            raise ModelError("C must have one column per state")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]


@dataclass(frozen=True)
class BinarySensor:
    """One threshold element: reports sign(C[row] x + v - threshold).

    noise_bound is the hard bound of the bounded-noise description,
    noise_variance the Gaussian variance of the probabilistic one; both are
    carried so either estimator family can consume the same bank.
    """

    row: int
    threshold: float
    noise_bound: float = 0.0
    noise_variance: float = 1.0

    def __post_init__(self):
        if self.row < 0:
            raise ModelError("sensor row index must be nonnegative")
        if self.noise_bound < 0:
            raise ModelError("noise bound must be nonnegative")
        if not self.noise_variance > 0:
            raise ModelError("noise variance must be positive")


@dataclass(frozen=True)
class BoundedSets:
    """Radii of the compact sets the deterministic analysis quantifies over."""

    rho_X: float
    rho_U: float
    rho_W: float
    rho_V: tuple

    def __post_init__(self):
        object.__setattr__(self, "rho_V", tuple(float(v) for v in self.rho_V))
        for name in ("rho_X", "rho_U", "rho_W"):
            if getattr(self, name) < 0:
                raise ModelError(f"{name} must be nonnegative")
        if any(v < 0 for v in self.rho_V):
            raise ModelError("per-sensor noise radii must be nonnegative")


def detect_switchings(outputs):
    """Per-sensor switching instants of a label sequence, 1-based.

    outputs: (K, p) labels, rows ordered in time, either hard (+1/-1) or
    probabilistic (0/1).  Instant k (1-based, k <= K-1) is a switching
    instant when the labels at k and k+1 disagree in sign.
    """
    Y = np.asarray(outputs, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    vals = set(np.unique(Y).tolist())
    if vals <= {0.0, 1.0}:
        Y = 2.0 * Y - 1.0
    elif not vals <= {-1.0, 1.0}:
        raise ModelError("labels must be -1/+1 or 0/1")
    flips = Y[:-1] * Y[1:] < 0
    return tuple(
        tuple(int(k) + 1 for k in np.nonzero(flips[:, i])[0]) for i in range(Y.shape[1])
    )


@dataclass(frozen=True)
class MheWindow:
    """A window of N inputs, N+1 output labels, and an arrival prediction.

    switch_sets holds the per-sensor switching instants, 1-based within the
    window; it must match what detect_switchings recomputes from outputs.
    xbar is the prediction of the oldest window state.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    switch_sets: tuple
    xbar: np.ndarray

    def __post_init__(self):
        inputs = _frozen(self.inputs)
        outputs = _frozen(self.outputs)
        xbar = _frozen(self.xbar)
        if inputs.ndim != 2 or outputs.ndim != 2:
            raise ModelError("inputs and outputs must be 2-D")
        if outputs.shape[0] != inputs.shape[0] + 1:
            raise ModelError("a window holds N inputs and N+1 output rows")
        sets = tuple(tuple(int(h) for h in s) for s in self.switch_sets)
        if sets != detect_switchings(outputs):
            raise ModelError("switch_sets do not match the output labels")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "switch_sets", sets)
        object.__setattr__(self, "xbar", xbar)

    @property
    def N(self):
        return self.inputs.shape[0]


def make_window(inputs, outputs, xbar):
    """Build a window, deriving the switching sets from the labels."""
    return MheWindow(inputs, outputs, detect_switchings(outputs), xbar)


def expm(M):
    """Matrix exponential by scaling-and-squaring of a truncated series.

    The argument is halved until its infinity norm is at most 1/2, the
    series is summed to machine precision at that scale, and the result is
    squared back up.
    """
    M = np.asarray(M, dtype=float)
    norm = float(np.max(np.sum(np.abs(M), axis=1))) if M.size else 0.0
    squarings = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    A = M / (2.0**squarings)
    n = M.shape[0]
    E = np.eye(n)
    term = np.eye(n)
    for k in range(1, 40):
        term = term @ A / k
        E = E + term
        if np.max(np.abs(term)) <= 1e-16 * np.max(np.abs(E)):
            break
    for _ in range(squarings):
        E = E @ E
    return E


def discretize(cm):
    """Zero-order-hold discretization of a continuous model.

    Returns (A, B) with A = exp(Ac Ts) and B the integrated input map,
    both read off one exponential of the augmented [[Ac, Bc], [0, 0]] Ts.
    """
    n = cm.Ac.shape[0]
    m = cm.Bc.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = cm.Ac
    aug[:n, n:] = cm.Bc
    E = expm(aug * cm.Ts)
    return E[:n, :n], E[:n, n:]


def step(sys, x, u, w):
    """One state transition A x + B u + w."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    return sys.A @ x + (sys.B @ u if sys.m else 0.0) + w


def sense(sys, sensors, x, v):
    """Hard labels of the sensor bank at state x with additive noise v.

    A reading exactly at the threshold maps to +1.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    y = np.empty(len(sensors))
    for i, s in enumerate(sensors):
        z = float(sys.C[s.row] @ x) + float(v[i])
        y[i] = 1.0 if z >= s.threshold else -1.0
    return y


def observability_matrix(sys, sensors, switch_sets, N):
    """Stack of sensor rows propagated to their window switching instants.

    For sensor i with switching instant h (1-based in 1..N) the stacked row
    is C^i A^(h-1).  Sensors contribute in bank order, instants ascending.
    Returns a (sum of set sizes, n) matrix; possibly 0 x n.
    """
    n = sys.n
    powers = [np.eye(n)]
    for _ in range(N - 1):
        powers.append(powers[-1] @ sys.A)
    rows = []
    for s, insts in zip(sensors, switch_sets):
        c = sys.C[s.row]
        for h in sorted(insts):
            if not 1 <= h <= N:
                raise ModelError("switching instant outside the window")
            rows.append(c @ powers[h - 1])
    if not rows:
        return np.zeros((0, n))
    return np.array(rows)


def observability_measure(theta):
    """sqrt of the smallest eigenvalue of theta' theta; 0 for empty stacks."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[0] == 0:
        return 0.0
    lam = float(np.linalg.eigvalsh(theta.T @ theta)[0])
    return math.sqrt(max(lam, 0.0))


def build_oscillator_network(Ad, laplacian, gamma, block_row=(0.0, 0.0, 1.0, 0.0)):
    """Diffusively coupled copies of a block system.

    A = I_q (x) Ad - gamma (L (x) I), one local output row per block.  The
    coupling graph Laplacian must be symmetric with zero row sums.
    """
    Ad = np.asarray(Ad, dtype=float)
    L = np.asarray(laplacian, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ModelError("laplacian must be square")
    if not np.allclose(L, L.T, atol=1e-12):
        raise ModelError("laplacian must be symmetric")
    if not np.allclose(L.sum(axis=1), 0.0, atol=1e-12):
        raise ModelError("laplacian row sums must vanish")
    q = L.shape[0]
    nb = Ad.shape[0]
    A = np.kron(np.eye(q), Ad) - gamma * np.kron(L, np.eye(nb))
    C = np.kron(np.eye(q), np.asarray(block_row, dtype=float))
    B = np.zeros((q * nb, 0))
    return LinearSystem(A, B, C)
