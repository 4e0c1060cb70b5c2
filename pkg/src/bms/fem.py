"""Linear triangle finite elements for a diffusion field on an L-shape.

The domain is a 2:1 rectangle with its top-right quadrant removed, scaled
so the area is 7.44; the bottom edge carries the Dirichlet condition and
the rest of the boundary is insulated.  Two calibrated meshes are built
here: a coarse one (97 vertices, 152 triangles) used as the estimation
model and a fine one (915 vertices, 1695 triangles) used as ground truth.

Semi-discretization gives M xdot = -S x - S_D gamma over the free vertex
values; implicit Euler turns that into x+ = A x + B u with
A = (M + dt S)^{-1} M, B = dt (M + dt S)^{-1} and the constant load
u = -S_D gamma.  The spectral radius of A never exceeds one.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import LocationError, MeshError, WeightError

AREA = 7.44  # total domain area; the side unit a solves 3 a^2 = AREA


def _frozen(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TriMesh:
    """Conforming triangulation with free vertices ordered first.

    vertices: (V, 2) coordinates, rows 0..m-1 free, the rest Dirichlet;
    triangles: (T, 3) vertex indices, counter-clockwise.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    m: int

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        T = np.atleast_2d(np.asarray(self.triangles, dtype=np.int64))
        m = int(self.m)
        if V.ndim != 2 or V.shape[1] != 2:
            raise MeshError("vertices must be (V, 2)")
        if T.ndim != 2 or T.shape[1] != 3:
            raise MeshError("triangles must be (T, 3)")
        if not (0 < m <= V.shape[0]):
            raise MeshError("free vertex count out of range")
        if T.min() < 0 or T.max() >= V.shape[0]:
            raise MeshError("triangle indices out of range")
        for t in range(T.shape[0]):
            i, j, k = T[t]
            det = (V[j, 0] - V[i, 0]) * (V[k, 1] - V[i, 1]) - (
                V[k, 0] - V[i, 0]
            ) * (V[j, 1] - V[i, 1])
            if det <= 0.0:
                raise MeshError(f"triangle {t} is degenerate or clockwise")
        object.__setattr__(self, "vertices", _frozen(V))
        object.__setattr__(self, "triangles", _frozen(T, dtype=np.int64))
        object.__setattr__(self, "m", m)

    @property
    def m_phi(self):
        return self.vertices.shape[0]

    @property
    def n_dirichlet(self):
        return self.m_phi - self.m

    def areas(self):
        V, T = self.vertices, self.triangles
        e1 = V[T[:, 1]] - V[T[:, 0]]
        e2 = V[T[:, 2]] - V[T[:, 0]]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e2[:, 0] * e1[:, 1])


@dataclass(frozen=True)
class FemOperators:
    """Assembled free-vertex operators and the Dirichlet coupling.

    M is the consistent mass over free vertices (positive definite), S the
    stiffness over free vertices, S_D the stiffness columns into the
    Dirichlet vertices, gamma_bc the Dirichlet values.  Because constants
    lie in the element space, the rows of [S | S_D] sum to zero.
    """

    M: np.ndarray
    S: np.ndarray
    S_D: np.ndarray
    gamma_bc: np.ndarray
    lambda_d: float

    def __post_init__(self):
        object.__setattr__(self, "M", _frozen(self.M))
        object.__setattr__(self, "S", _frozen(self.S))
        object.__setattr__(self, "S_D", _frozen(self.S_D))
        object.__setattr__(self, "gamma_bc", _frozen(np.atleast_1d(self.gamma_bc)))
        object.__setattr__(self, "lambda_d", float(self.lambda_d))


@dataclass(frozen=True)
class FieldModel:
    """Implicit-Euler state map of the semi-discrete field.

    x+ = A x + B u_bc with the constant Dirichlet load u_bc = -S_D gamma.
    rho records the spectral radius of A (at most one by construction).
    """

    A: np.ndarray
    B: np.ndarray
    u_bc: np.ndarray
    delta_t: float
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "B", _frozen(self.B))
        object.__setattr__(self, "u_bc", _frozen(np.atleast_1d(self.u_bc)))
        object.__setattr__(self, "delta_t", float(self.delta_t))
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def push(self):
        """Constant per-step state increment B u_bc."""
        return self.B @ self.u_bc


def _grid_lshape(nx_l, nx_r, ny_bar, ny_leg, corner_split):
    a = math.sqrt(AREA / 3.0)
    xs = np.concatenate(
        [np.linspace(0.0, a, nx_l + 1), np.linspace(a, 2.0 * a, nx_r + 1)[1:]]
    )
    ys_bar = np.linspace(0.0, a, ny_bar + 1)
    ys_leg = np.linspace(a, 2.0 * a, ny_leg + 1)[1:]
    nxb = xs.shape[0]

    verts = []
    for y in ys_bar:
        for x in xs:
            verts.append((x, y))
    for y in ys_leg:
        for x in xs[: nx_l + 1]:
            verts.append((x, y))
    VB = nxb * (ny_bar + 1)

    def bar_id(i, j):
        return j * nxb + i

    def leg_id(i, jj):
        if jj == 0:
            return bar_id(i, ny_bar)
        return VB + (jj - 1) * (nx_l + 1) + i

    tris = []
    for j in range(ny_bar):
        for i in range(nxb - 1):
            bl, br = bar_id(i, j), bar_id(i + 1, j)
            tl, tr = bar_id(i, j + 1), bar_id(i + 1, j + 1)
            tris.append((bl, br, tr))
            tris.append((bl, tr, tl))
    for jj in range(ny_leg):
        for i in range(nx_l):
            bl, br = leg_id(i, jj), leg_id(i + 1, jj)
            tl, tr = leg_id(i, jj + 1), leg_id(i + 1, jj + 1)
            if corner_split and jj == 0 and i == nx_l - 1:
                # one extra vertex on the re-entrant boundary edge keeps the
                # mesh conforming while hitting the calibrated counts
                hy = ys_leg[0] - a
                mid = len(verts)
                verts.append((a, a + 0.5 * hy))
                tris.append((bl, br, mid))
                tris.append((bl, mid, tl))
                tris.append((tl, mid, tr))
            else:
                tris.append((bl, br, tr))
                tris.append((bl, tr, tl))

    V = np.array(verts, dtype=float)
    T = np.array(tris, dtype=np.int64)
    # Dirichlet rows are the bottom edge (the first nxb generated vertices);
    # reorder so free vertices come first
    total = V.shape[0]
    perm = np.empty(total, dtype=np.int64)
    perm[nxb:] = np.arange(total - nxb)
    perm[:nxb] = np.arange(total - nxb, total)
    return TriMesh(V[np.argsort(perm)], perm[T], total - nxb)


def generate_lshape_mesh(h):
    """One of the two calibrated L-shape meshes, picked by element size.

    h at or above the short side is rejected; h >= 0.2 selects the coarse
    preset (97 vertices, 152 triangles), anything finer the fine preset
    (915 vertices, 1695 triangles).
    """
    a = math.sqrt(AREA / 3.0)
    if h >= a:
        raise MeshError(f"element size {h} does not resolve the domain (side {a:.3f})")
    if h <= 0.0:
        raise MeshError("element size must be positive")
    if h >= 0.2:
        return _grid_lshape(4, 3, 8, 5, corner_split=False)
    return _grid_lshape(17, 14, 18, 17, corner_split=True)


def save_mesh(mesh, path):
    """Write the text form: a vertex section with tags, then triangles.

    Floats are written in shortest round-trip form, triangle indices are
    1-based; loading reproduces the arrays bit for bit.
    """
    lines = [f"vertices {mesh.m_phi} {mesh.m}"]
    for i in range(mesh.m_phi):
        tag = 0 if i < mesh.m else 1
        lines.append(
            f"{float(mesh.vertices[i, 0])!r} {float(mesh.vertices[i, 1])!r} {tag}"
        )
    lines.append(f"triangles {mesh.triangles.shape[0]}")
    for t in mesh.triangles:
        lines.append(f"{t[0] + 1} {t[1] + 1} {t[2] + 1}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path):
    """Read the text form written by save_mesh."""
    with open(path) as fh:
        toks = fh.read().split("\n")
    toks = [t for t in toks if t.strip()]
    head = toks[0].split()
    if len(head) != 3 or head[0] != "vertices":
        raise MeshError("mesh file must start with 'vertices m_phi m'")
    m_phi, m = int(head[1]), int(head[2])
    verts = np.empty((m_phi, 2))
    for i in range(m_phi):
        parts = toks[1 + i].split()
        if len(parts) != 3:
            raise MeshError(f"vertex line {i + 1} malformed")
        verts[i] = (float(parts[0]), float(parts[1]))
        tag = int(parts[2])
        if tag != (0 if i < m else 1):
            raise MeshError(f"vertex line {i + 1} tag disagrees with the header split")
    thead = toks[1 + m_phi].split()
    if len(thead) != 2 or thead[0] != "triangles":
        raise MeshError("expected a 'triangles T' section header")
    nt = int(thead[1])
    tris = np.empty((nt, 3), dtype=np.int64)
    for t in range(nt):
        parts = toks[2 + m_phi + t].split()
        tris[t] = [int(q) - 1 for q in parts]
    return TriMesh(verts, tris, m)


def assemble_full(mesh, lambda_d):
    """Consistent mass and stiffness over all vertices, free and Dirichlet."""
    return kernels.fem_assemble_dense(
        np.ascontiguousarray(mesh.vertices),
        np.ascontiguousarray(mesh.triangles),
        float(lambda_d),
    )


def assemble(mesh, lambda_d, gamma_bc):
    """Free-vertex operators with the Dirichlet coupling split off.

    gamma_bc: scalar or per-Dirichlet-vertex values.
    """
    if lambda_d <= 0:
        raise WeightError("diffusivity must be positive")
    Mf, Sf = assemble_full(mesh, lambda_d)
    m = mesh.m
    gamma = np.broadcast_to(
        np.asarray(gamma_bc, dtype=float), (mesh.n_dirichlet,)
    ).copy()
    return FemOperators(
        Mf[:m, :m], Sf[:m, :m], Sf[:m, m:], gamma, float(lambda_d)
    )


def discretize_field(ops, delta_t):
    """Implicit-Euler field model at step delta_t.

    One Cholesky factorization of M + dt S produces the state map, the
    input map, and (through the mass similarity) the spectral radius.
    """
    if delta_t <= 0:
        raise WeightError("the time step must be positive")
    m = ops.M.shape[0]
    K = ops.M + delta_t * ops.S
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        raise WeightError("M + dt S is not positive definite") from None
    rhs = np.hstack([ops.M, np.eye(m)])
    sol = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    A = sol[:, :m]
    B = delta_t * sol[:, m:]
    u_bc = -ops.S_D @ ops.gamma_bc
    # spectrum of K^{-1} M through the symmetric pencil Lm' K^{-1} Lm
    Lm = np.linalg.cholesky(ops.M)
    sym = Lm.T @ np.linalg.solve(L.T, np.linalg.solve(L, Lm))
    rho = float(np.max(np.linalg.eigvalsh(0.5 * (sym + sym.T))))
    return FieldModel(A, B, u_bc, delta_t, rho)


def sensor_rows(mesh, points):
    """Barycentric interpolation rows of point sensors.

    Returns (C, D): C over free vertices, D over Dirichlet vertices, one
    row per point, each row summing to one across the pair.  A point
    outside every triangle raises a location error.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    V, T = mesh.vertices, mesh.triangles
    m = mesh.m
    C = np.zeros((pts.shape[0], m))
    D = np.zeros((pts.shape[0], mesh.n_dirichlet))
    for q, (px, py) in enumerate(pts):
        placed = False
        for t in range(T.shape[0]):
            i, j, k = T[t]
            det = (V[j, 0] - V[i, 0]) * (V[k, 1] - V[i, 1]) - (
                V[k, 0] - V[i, 0]
            ) * (V[j, 1] - V[i, 1])
            w1 = (
                (V[j, 0] - px) * (V[k, 1] - py) - (V[k, 0] - px) * (V[j, 1] - py)
            ) / det
            w2 = (
                (V[k, 0] - px) * (V[i, 1] - py) - (V[i, 0] - px) * (V[k, 1] - py)
            ) / det
            w3 = 1.0 - w1 - w2
            if w1 >= -1e-9 and w2 >= -1e-9 and w3 >= -1e-9:
                for vid, w in ((i, w1), (j, w2), (k, w3)):
                    if vid < m:
                        C[q, vid] += w
                    else:
                        D[q, vid - m] += w
                placed = True
                break
        if not placed:
            raise LocationError(f"point ({px}, {py}) lies outside the mesh")
    return C, D


def simulate_ground_truth(fm, x0, steps):
    """Roll the field model forward; returns (steps+1, m) free-vertex values."""
    m = fm.A.shape[0]
    X = np.empty((steps + 1, m))
    X[0] = np.broadcast_to(np.asarray(x0, dtype=float), (m,))
    push = fm.push
    for k in range(steps):
        X[k + 1] = fm.A @ X[k] + push
    return X
