"""Piecewise-linear fully discontinuous vector fields and their trace calculus.

Degrees of freedom are laid out triangle-major, vertex-minor with the
displacement component innermost: dof(t, v, c) = 6*t + 2*v + c.  Symmetric
2x2 tensors are handled in a compact 3-vector form (t11, t22, t12) whose
Frobenius product carries the weight diag(1, 1, 2).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .mesh import BoundaryLabel, Mesh, ancestor_triangles

# 2-point Gauss rule on [0, 1]; exact for cubics, used for all P1 x P1
# edge integrands
GAUSS2_POINTS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
GAUSS2_WEIGHTS = np.array([0.5, 0.5])

# 4-point Gauss rule on [0, 1]; shared by the contact-edge quadrature tables
GAUSS4_POINTS = np.array([
    0.5 - 0.5 * 0.8611363115940526, 0.5 - 0.5 * 0.3399810435848563,
    0.5 + 0.5 * 0.3399810435848563, 0.5 + 0.5 * 0.8611363115940526])
GAUSS4_WEIGHTS = 0.5 * np.array([
    0.3478548451374538, 0.6521451548625461,
    0.6521451548625461, 0.3478548451374538])

# midpoint rule on the reference triangle (degree-2 exact); barycentric
TRI_MID_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
TRI_MID_WEIGHTS = np.array([1.0, 1.0, 1.0]) / 3.0

VOIGT_WEIGHT = np.array([1.0, 1.0, 2.0])


@dataclass(frozen=True)
class MaterialParams:
    """Homogeneous isotropic material; stresses in daN/mm^2."""
    E: float
    nu: float
    lam: float
    mu: float

    @classmethod
    def from_young_poisson(cls, E, nu):
        if not (E > 0 and 0 < nu < 0.5):
            raise ValueError("need E > 0 and 0 < nu < 1/2 for lam, mu > 0")
        mu = E / (2.0 * (1.0 + nu))
        lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        return cls(E=float(E), nu=float(nu), lam=lam, mu=mu)

    def stiffness_voigt(self):
        lam, mu = self.lam, self.mu
        return np.array([[lam + 2 * mu, lam, 0.0],
                         [lam, lam + 2 * mu, 0.0],
                         [0.0, 0.0, 2 * mu]])


def voigt_to_matrix(v):
    v = np.asarray(v, dtype=float)
    return np.array([[v[0], v[2]], [v[2], v[1]]])


def matrix_to_voigt(m):
    m = np.asarray(m, dtype=float)
    return np.stack([m[..., 0, 0], m[..., 1, 1],
                     0.5 * (m[..., 0, 1] + m[..., 1, 0])], axis=-1)


@dataclass
class DGFunction:
    """Elementwise-linear discontinuous vector field (mm)."""
    mesh: Mesh
    coeffs: np.ndarray  # (nt, 3, 2) vertex values per triangle

    def __post_init__(self):
        self.coeffs = np.ascontiguousarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.mesh.n_triangles, 3, 2):
            raise ValueError("coefficient array must have shape (nt, 3, 2)")

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros((mesh.n_triangles, 3, 2)))

    @classmethod
    def from_flat(cls, mesh, vec):
        return cls(mesh, np.asarray(vec, dtype=float).reshape(
            mesh.n_triangles, 3, 2))

    @classmethod
    def interpolate(cls, mesh, fn):
        """Elementwise nodal interpolation of a callable (x, y) -> (2,)."""
        pts = mesh.vertices[mesh.triangles].reshape(-1, 2)
        vals = evaluate_vector_field(fn, pts).reshape(mesh.n_triangles, 3, 2)
        return cls(mesh, vals)

    @property
    def flat(self):
        return self.coeffs.reshape(-1)

    def value(self, t, point):
        """Evaluate inside triangle t using only t's coefficients."""
        lam = barycentric(self.mesh, t, point)
        return lam @ self.coeffs[t]

    def copy(self):
        return DGFunction(self.mesh, self.coeffs.copy())


@dataclass
class TensorField2x2:
    """Per-triangle constant symmetric 2x2 tensor field (daN/mm^2)."""
    mesh: Mesh
    voigt: np.ndarray  # (nt, 3)

    def __post_init__(self):
        self.voigt = np.ascontiguousarray(self.voigt, dtype=float)
        if self.voigt.shape != (self.mesh.n_triangles, 3):
            raise ValueError("voigt array must have shape (nt, 3)")

    def matrix(self, t):
        return voigt_to_matrix(self.voigt[t])


def evaluate_vector_field(fn, points):
    """Evaluate constants or callables to an (n, 2) array."""
    points = np.atleast_2d(points)
    if callable(fn):
        out = np.asarray(fn(points[:, 0], points[:, 1]), dtype=float)
        if out.shape == (2,):
            out = np.tile(out, (len(points), 1))
        elif out.shape == (2, len(points)):
            out = out.T
        return out.reshape(len(points), 2)
    arr = np.asarray(fn, dtype=float).reshape(2)
    return np.tile(arr, (len(points), 1))


def evaluate_scalar_field(fn, points):
    points = np.atleast_2d(points)
    if callable(fn):
        out = np.asarray(fn(points[:, 0], points[:, 1]), dtype=float)
        return np.broadcast_to(out, (len(points),)).astype(float)
    return np.full(len(points), float(fn))


def barycentric(mesh, t, point):
    p = mesh.triangle_points(t)
    T = np.column_stack([p[1] - p[0], p[2] - p[0]])
    loc = np.linalg.solve(T, np.asarray(point, dtype=float) - p[0])
    return np.array([1.0 - loc[0] - loc[1], loc[0], loc[1]])


def shape_gradients(mesh) -> np.ndarray:
    """Gradients of the three barycentric basis functions, (nt, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    g = np.empty((mesh.n_triangles, 3, 2))
    two_a = 2.0 * mesh.areas
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = (p[:, j, 1] - p[:, k, 1]) / two_a
        g[:, i, 1] = (p[:, k, 0] - p[:, j, 0]) / two_a
    return g


def strain_matrices(mesh) -> np.ndarray:
    """Per-triangle strain operators B, (nt, 3, 6): coeffs -> Voigt strain."""
    g = shape_gradients(mesh)
    B = np.zeros((mesh.n_triangles, 3, 6))
    for v in range(3):
        B[:, 0, 2 * v + 0] = g[:, v, 0]
        B[:, 1, 2 * v + 1] = g[:, v, 1]
        B[:, 2, 2 * v + 0] = 0.5 * g[:, v, 1]
        B[:, 2, 2 * v + 1] = 0.5 * g[:, v, 0]
    return B


def strain_all(v: DGFunction) -> TensorField2x2:
    B = strain_matrices(v.mesh)
    voigt = np.einsum("tij,tj->ti", B, v.coeffs.reshape(-1, 6))
    return TensorField2x2(v.mesh, voigt)


def strain(v: DGFunction, t: int) -> np.ndarray:
    """Symmetric gradient of v on triangle t (constant 2x2 matrix)."""
    return strain_all(v).matrix(t)


def stress(eps, mat: MaterialParams) -> np.ndarray:
    """sigma = lam*tr(eps)*I + 2*mu*eps for a symmetric 2x2 strain."""
    eps = np.asarray(eps, dtype=float)
    if not np.allclose(eps, eps.T):
        raise ValueError("strain must be symmetric")
    return mat.lam * np.trace(eps) * np.eye(2) + 2.0 * mat.mu * eps


def stress_all(v: DGFunction, mat: MaterialParams) -> TensorField2x2:
    eps = strain_all(v)
    D = mat.stiffness_voigt()
    return TensorField2x2(v.mesh, eps.voigt @ D.T)


def _edge_sides(mesh, e):
    """Incident triangles of edge e with the local indices of its endpoints."""
    a, b = mesh.edges[e]
    sides = []
    for t in mesh.edge_tris[e]:
        if t < 0:
            continue
        tri = mesh.triangles[t]
        la = int(np.nonzero(tri == a)[0][0])
        lb = int(np.nonzero(tri == b)[0][0])
        sides.append((int(t), la, lb))
    return sides


def _trace_value(v, t, la, lb, s):
    """Trace of v on edge points parametrized x(s) = a + s*(b-a)."""
    c = v.coeffs[t]
    return np.outer(1.0 - s, c[la]) + np.outer(s, c[lb])


def symmetrized_outer(vec, n):
    out = 0.5 * (np.einsum("...i,j->...ij", vec, n)
                 + np.einsum("...i,j->...ji", vec, n))
    return out


def jump_vector(v: DGFunction, e: int, x) -> np.ndarray:
    """Symmetrized tensor jump of a vector field at a point on edge e."""
    a, b = v.mesh.vertices[v.mesh.edges[e]]
    ab = b - a
    s = float(np.dot(np.asarray(x, dtype=float) - a, ab) / (ab @ ab))
    n = v.mesh.edge_normals[e]
    sides = _edge_sides(v.mesh, e)
    t0, la, lb = sides[0]
    val = _trace_value(v, t0, la, lb, np.array([s]))[0]
    if len(sides) == 1:
        return symmetrized_outer(val, n)
    t1, la1, lb1 = sides[1]
    val_minus = _trace_value(v, t1, la1, lb1, np.array([s]))[0]
    return symmetrized_outer(val - val_minus, n)


def average_tensor(phi: TensorField2x2, e: int) -> np.ndarray:
    tris = [t for t in phi.mesh.edge_tris[e] if t >= 0]
    mats = [phi.matrix(t) for t in tris]
    return mats[0] if len(mats) == 1 else 0.5 * (mats[0] + mats[1])


def jump_tensor(phi: TensorField2x2, e: int) -> np.ndarray:
    """phi+ n+ + phi- n- on interior edges, phi n_e on the boundary."""
    n = phi.mesh.edge_normals[e]
    tris = [t for t in phi.mesh.edge_tris[e] if t >= 0]
    if len(tris) == 1:
        return phi.matrix(tris[0]) @ n
    return (phi.matrix(tris[0]) - phi.matrix(tris[1])) @ n


def edge_jump_integral(v: DGFunction, e: int) -> np.ndarray:
    """Integral of the symmetrized jump of v over edge e, in Voigt form."""
    mesh = v.mesh
    n = mesh.edge_normals[e]
    sides = _edge_sides(mesh, e)
    w = GAUSS2_WEIGHTS * mesh.edge_lengths[e]
    t0, la, lb = sides[0]
    vals = _trace_value(v, t0, la, lb, GAUSS2_POINTS)
    if len(sides) == 2:
        t1, la1, lb1 = sides[1]
        vals = vals - _trace_value(v, t1, la1, lb1, GAUSS2_POINTS)
    delta = w @ vals
    return np.array([delta[0] * n[0], delta[1] * n[1],
                     0.5 * (delta[0] * n[1] + delta[1] * n[0])])


def local_lifting(mesh: Mesh, e: int, q) -> TensorField2x2:
    """Local lifting r_e of an edge tensor field into piecewise-constant
    symmetric tensors supported on the triangles sharing e.

    ``q`` is a constant symmetric 2x2 matrix or a callable s -> 2x2 matrix of
    the arclength fraction along the edge; it is integrated with the 2-point
    Gauss rule.  Defined by the identity
    integral(r_e(q) : tau) = -integral_e(q : {{tau}}) for all piecewise
    constant symmetric test tensors tau.
    """
    label = mesh.edge_labels[e]
    interior = label == -1
    if not (interior or label == BoundaryLabel.DIRICHLET):
        raise ValueError("lifting is defined on interior and Dirichlet edges")
    if callable(q):
        qint = sum(w * np.asarray(q(s), dtype=float)
                   for s, w in zip(GAUSS2_POINTS, GAUSS2_WEIGHTS))
    else:
        qint = np.asarray(q, dtype=float)
    qint = matrix_to_voigt(qint) * mesh.edge_lengths[e]
    kappa = 0.5 if interior else 1.0
    out = np.zeros((mesh.n_triangles, 3))
    for t in mesh.edge_tris[e]:
        if t >= 0:
            out[t] = -kappa / mesh.areas[t] * qint
    return TensorField2x2(mesh, out)


class DGNorm(NamedTuple):
    total: float
    energy: float   # broken elastic energy part |v|_h
    jump: float     # scaled jump part |v|_*


def jump_seminorm_sq(v: DGFunction, edge_ids) -> float:
    """Sum of h_e^-1 ||[[v]]||^2 over the given edges."""
    mesh = v.mesh
    total = 0.0
    for e in edge_ids:
        n = mesh.edge_normals[e]
        sides = _edge_sides(mesh, e)
        t0, la, lb = sides[0]
        vals = _trace_value(v, t0, la, lb, GAUSS2_POINTS)
        if len(sides) == 2:
            t1, la1, lb1 = sides[1]
            vals = vals - _trace_value(v, t1, la1, lb1, GAUSS2_POINTS)
        # [[v]]:[[v]] = (|d|^2 + (d.n)^2) / 2 for unit normal n
        dn = vals @ n
        dens = 0.5 * ((vals ** 2).sum(axis=1) + dn ** 2)
        h = mesh.edge_lengths[e]
        total += (GAUSS2_WEIGHTS * h) @ dens / h
    return float(total)


def dg_norm(v: DGFunction, mat: MaterialParams) -> DGNorm:
    """Broken energy norm: elastic energy plus interior/Dirichlet jumps."""
    eps = strain_all(v).voigt
    D = mat.stiffness_voigt()
    dens = np.einsum("ti,ij,tj,j->t", eps, D, eps, VOIGT_WEIGHT)
    energy_sq = float(np.dot(v.mesh.areas, dens))
    jump_sq = jump_seminorm_sq(v, v.mesh.flux_edges)
    return DGNorm(np.sqrt(energy_sq + jump_sq), np.sqrt(energy_sq),
                  np.sqrt(jump_sq))


def enrich(v: DGFunction) -> np.ndarray:
    """Averaging map onto continuous P1 nodal values, clamped on Dirichlet.

    Returns per-vertex values (nv, 2); vertices on the closure of the
    Dirichlet boundary are set to zero.
    """
    mesh = v.mesh
    sums = np.zeros((mesh.n_vertices, 2))
    counts = np.zeros(mesh.n_vertices)
    flat_ids = mesh.triangles.reshape(-1)
    np.add.at(sums, flat_ids, v.coeffs.reshape(-1, 2))
    np.add.at(counts, flat_ids, 1.0)
    counts[counts == 0] = 1.0
    nodal = sums / counts[:, None]
    nodal[mesh.vertices_on(BoundaryLabel.DIRICHLET)] = 0.0
    return nodal


def nodal_to_dg(mesh: Mesh, nodal) -> DGFunction:
    """View continuous nodal values as a DG function (jump-free)."""
    nodal = np.asarray(nodal, dtype=float)
    return DGFunction(mesh, nodal[mesh.triangles])


def embed(v: DGFunction, fine: Mesh) -> DGFunction:
    """Exact representation of v on a nested finer mesh."""
    coarse_of = ancestor_triangles(fine, v.mesh)
    coeffs = np.empty((fine.n_triangles, 3, 2))
    fine_pts = fine.vertices[fine.triangles]
    for tf in range(fine.n_triangles):
        tc = int(coarse_of[tf])
        p = v.mesh.triangle_points(tc)
        T = np.column_stack([p[1] - p[0], p[2] - p[0]])
        loc = np.linalg.solve(T, (fine_pts[tf] - p[0]).T).T
        lam = np.column_stack([1.0 - loc.sum(axis=1), loc])
        coeffs[tf] = lam @ v.coeffs[tc]
    return DGFunction(fine, coeffs)
