"""Assembly of the DG bilinear forms, load functional and contact terms.

Five method variants share the volume term and the two consistency terms
over interior + Dirichlet edges; they differ in the stabilization: a scaled
jump penalty, local lifting terms, a global lifting term, or combinations.
Element and edge contributions are computed in vectorized batches and merged
through COO buffers in a fixed order, so assembled matrices are bit-stable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dgspace import (GAUSS2_POINTS, GAUSS2_WEIGHTS, GAUSS4_POINTS,
                      GAUSS4_WEIGHTS, DGFunction, MaterialParams,
                      evaluate_scalar_field, evaluate_vector_field,
                      strain_matrices)
from .mesh import BoundaryLabel, Mesh

VARIANT_KINDS = ("sipg", "nipg", "bassi", "brezzi", "ldg")


class PenaltyError(ValueError):
    """Inadmissible penalty for the chosen method variant."""


@dataclass(frozen=True)
class MethodVariant:
    kind: str
    eta: float

    def __post_init__(self):
        if self.kind not in VARIANT_KINDS:
            raise ValueError(f"unknown DG variant {self.kind!r}")
        if self.kind == "bassi":
            if not self.eta > 3.0:
                raise PenaltyError("Bassi et al. stabilization needs eta > 3")
        elif not self.eta > 0.0:
            raise PenaltyError(f"{self.kind} needs a positive penalty")

    @property
    def uses_jump_penalty(self):
        return self.kind in ("sipg", "nipg", "ldg")

    @property
    def uses_local_lifting(self):
        return self.kind in ("bassi", "brezzi")

    @property
    def uses_global_lifting(self):
        return self.kind in ("brezzi", "ldg")

    def check_conditioning(self, mat: MaterialParams):
        if self.kind == "sipg" and self.eta < 10.0 * mat.mu:
            warnings.warn(
                f"SIPG penalty {self.eta:.3g} is below 10*mu = "
                f"{10 * mat.mu:.3g}; coercivity may degrade", stacklevel=2)


@dataclass
class ProblemData:
    """Material, loads and contact coefficients.

    Scalar/vector data may be constants or callables of (x, y); callables
    are sampled at quadrature points.
    """
    mat: MaterialParams
    f: object = (0.0, 0.0)
    g: object = (0.0, 0.0)
    c_n: object = 0.0
    c_tau: object = 0.0
    m_n: int = 1
    g_a: object = 0.0

    def __post_init__(self):
        if self.m_n < 1:
            raise ValueError("compliance exponent m_n must be >= 1")
        for name in ("c_n", "c_tau", "g_a"):
            val = getattr(self, name)
            if not callable(val) and float(val) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class ContactTable:
    """Quadrature tables on the contact edges (4-point Gauss per edge)."""
    edge_ids: np.ndarray     # (nc,)
    tris: np.ndarray         # (nc,) adjacent triangle per edge
    locals_a: np.ndarray     # (nc,) local index of first edge vertex
    locals_b: np.ndarray
    points: np.ndarray       # (nq, 2)
    weights: np.ndarray      # (nq,) including edge length
    normals: np.ndarray      # (nq, 2) outward
    tangents: np.ndarray     # (nq, 2)
    c_n: np.ndarray
    c_tau: np.ndarray
    g_a: np.ndarray
    point_tri: np.ndarray    # (nq,)
    point_edge: np.ndarray   # (nq,)

    @property
    def n_points(self):
        return len(self.points)

    @property
    def n_edges(self):
        return len(self.edge_ids)


def _boundary_side(mesh, edge_ids):
    """Adjacent triangle and local endpoint indices for boundary edges."""
    tris = mesh.edge_tris[edge_ids, 0]
    a = mesh.edges[edge_ids, 0]
    b = mesh.edges[edge_ids, 1]
    tri_verts = mesh.triangles[tris]
    la = np.argmax(tri_verts == a[:, None], axis=1)
    lb = np.argmax(tri_verts == b[:, None], axis=1)
    return tris, la, lb


def build_contact_table(mesh: Mesh, data: ProblemData) -> ContactTable:
    ids = mesh.edge_ids(BoundaryLabel.CONTACT)
    tris, la, lb = _boundary_side(mesh, ids)
    nq_e = len(GAUSS4_POINTS)
    a = mesh.vertices[mesh.edges[ids, 0]]
    b = mesh.vertices[mesh.edges[ids, 1]]
    pts = a[:, None, :] + GAUSS4_POINTS[None, :, None] * (b - a)[:, None, :]
    pts = pts.reshape(-1, 2)
    weights = (mesh.edge_lengths[ids, None] * GAUSS4_WEIGHTS[None, :]).ravel()
    normals = np.repeat(mesh.edge_normals[ids], nq_e, axis=0)
    tangents = np.stack([-normals[:, 1], normals[:, 0]], axis=1)
    c_n = evaluate_scalar_field(data.c_n, pts)
    c_tau = evaluate_scalar_field(data.c_tau, pts)
    g_a = evaluate_scalar_field(data.g_a, pts)
    if np.any(c_n < 0) or np.any(c_tau < 0):
        raise ValueError("contact coefficients must be nonnegative")
    return ContactTable(
        edge_ids=ids, tris=tris, locals_a=la, locals_b=lb, points=pts,
        weights=weights, normals=normals, tangents=tangents,
        c_n=c_n, c_tau=c_tau, g_a=g_a,
        point_tri=np.repeat(tris, nq_e), point_edge=np.repeat(ids, nq_e))


def contact_trace_matrices(mesh: Mesh, table: ContactTable):
    """Sparse maps from DG coefficients to normal/tangential point values."""
    nq_e = len(GAUSS4_POINTS)
    ndof = 6 * mesh.n_triangles
    nq = table.n_points
    rows, cols, vals_n, vals_t = [], [], [], []
    for k in range(table.n_edges):
        t, la, lb = int(table.tris[k]), int(table.locals_a[k]), \
            int(table.locals_b[k])
        for q in range(nq_e):
            iq = k * nq_e + q
            s = GAUSS4_POINTS[q]
            n = table.normals[iq]
            tg = table.tangents[iq]
            for loc, w in ((la, 1.0 - s), (lb, s)):
                for c in range(2):
                    rows.append(iq)
                    cols.append(6 * t + 2 * loc + c)
                    vals_n.append(w * n[c])
                    vals_t.append(w * tg[c])
    shape = (nq, ndof)
    T_n = sp.csr_matrix((vals_n, (rows, cols)), shape=shape)
    T_t = sp.csr_matrix((vals_t, (rows, cols)), shape=shape)
    return T_n, T_t


@dataclass
class AssembledSystem:
    """Stiffness matrix, load vector and contact quadrature for one mesh."""
    mesh: Mesh
    variant: MethodVariant
    data: ProblemData
    K: sp.csr_matrix
    F: np.ndarray
    table: ContactTable
    T_n: sp.csr_matrix
    T_t: sp.csr_matrix

    @property
    def n_dofs(self):
        return 6 * self.mesh.n_triangles


def _dof_indices(tris):
    """(len(tris), 6) global dof indices for the given triangles."""
    return (6 * np.asarray(tris)[:, None] + np.arange(6)[None, :])


def _edge_batch(mesh, edge_ids, interior):
    """Geometry and trace tables for a batch of edges.

    Returns the per-dof trace vectors SP with shape (ne, nq, ndl, 2) where
    ndl is 12 for interior edges (+side first, -side negated) and 6 on the
    boundary, plus the matching global dof index array (ne, ndl).
    """
    a = mesh.edges[edge_ids, 0]
    b = mesh.edges[edge_ids, 1]
    nq = len(GAUSS2_POINTS)
    sides = []
    n_sides = 2 if interior else 1
    for s in range(n_sides):
        tris = mesh.edge_tris[edge_ids, s]
        tv = mesh.triangles[tris]
        la = np.argmax(tv == a[:, None], axis=1)
        lb = np.argmax(tv == b[:, None], axis=1)
        sides.append((tris, la, lb))

    ne = len(edge_ids)
    ndl = 6 * n_sides
    SP = np.zeros((ne, nq, ndl, 2))
    dofs = np.empty((ne, ndl), dtype=np.int64)
    eye = np.eye(2)
    for s, (tris, la, lb) in enumerate(sides):
        sign = 1.0 if s == 0 else -1.0
        dofs[:, 6 * s:6 * s + 6] = _dof_indices(tris)
        for q, sq in enumerate(GAUSS2_POINTS):
            for loc_arr, wval in ((la, 1.0 - sq), (lb, sq)):
                for c in range(2):
                    col = 6 * s + 2 * loc_arr + c
                    SP[np.arange(ne), q, col, c] += sign * wval
    return SP, dofs, sides


def _edge_sigma_n(mesh, mat, sides, normals, halved):
    """({{sigma(phi_j)}} n) for each edge-local dof, shape (ne, ndl, 2)."""
    B = strain_matrices(mesh)
    D = mat.stiffness_voigt()
    ne = len(normals)
    ndl = 6 * len(sides)
    out = np.zeros((ne, ndl, 2))
    factor = 0.5 if halved else 1.0
    for s, (tris, _, _) in enumerate(sides):
        SB = np.einsum("ij,tjk->tik", D, B[tris])  # (ne, 3, 6) Voigt stress
        tn = np.empty((ne, 2, 6))
        tn[:, 0] = SB[:, 0] * normals[:, 0, None] + SB[:, 2] * normals[:, 1, None]
        tn[:, 1] = SB[:, 2] * normals[:, 0, None] + SB[:, 1] * normals[:, 1, None]
        out[:, 6 * s:6 * s + 6, :] = factor * tn.transpose(0, 2, 1)
    return out


def _jump_integrals(SP, lengths, normals):
    """Edge integrals of the symmetrized dof jumps, Voigt (ne, ndl, 3)."""
    IS = np.einsum("q,eqic->eic", GAUSS2_WEIGHTS, SP) * lengths[:, None, None]
    J = np.empty(IS.shape[:2] + (3,))
    J[..., 0] = IS[..., 0] * normals[:, None, 0]
    J[..., 1] = IS[..., 1] * normals[:, None, 1]
    J[..., 2] = 0.5 * (IS[..., 0] * normals[:, None, 1]
                       + IS[..., 1] * normals[:, None, 0])
    return IS, J


def assemble_bilinear(mesh: Mesh, variant: MethodVariant,
                      mat: MaterialParams) -> sp.csr_matrix:
    """Stiffness matrix of the chosen DG bilinear form."""
    variant.check_conditioning(mat)
    ndof = 6 * mesh.n_triangles
    D = mat.stiffness_voigt()
    WD = np.diag([1.0, 1.0, 2.0]) @ D

    rows_acc, cols_acc, vals_acc = [], [], []

    def push(local, dofs):
        ne, ndl = dofs.shape
        rows_acc.append(np.repeat(dofs, ndl, axis=1).ravel())
        cols_acc.append(np.tile(dofs, (1, ndl)).ravel())
        vals_acc.append(local.ravel())

    # volume term
    B = strain_matrices(mesh)
    K_loc = np.einsum("tiv,ij,tjw,t->tvw", B, WD, B, mesh.areas)
    push(K_loc, _dof_indices(np.arange(mesh.n_triangles)))

    # one global-lifting accumulator shared by all edges
    if variant.uses_global_lifting:
        R_rows, R_cols, R_vals = [], [], []

    for interior in (True, False):
        if interior:
            edge_ids = mesh.interior_edges
        else:
            edge_ids = mesh.edge_ids(BoundaryLabel.DIRICHLET)
        if len(edge_ids) == 0:
            continue
        SP, dofs, sides = _edge_batch(mesh, edge_ids, interior)
        lengths = mesh.edge_lengths[edge_ids]
        normals = mesh.edge_normals[edge_ids]
        ne, nq, ndl, _ = SP.shape
        wq = GAUSS2_WEIGHTS[None, :] * lengths[:, None]

        # consistency: Mc[i, j] = <[[phi_i]], {{sigma(phi_j)}}>
        IS, J = _jump_integrals(SP, lengths, normals)
        SigN = _edge_sigma_n(mesh, mat, sides, normals, halved=interior)
        Mc = np.einsum("eic,ejc->eij", IS, SigN)

        sign_u = 1.0 if variant.kind == "nipg" else -1.0
        local = sign_u * Mc.transpose(0, 2, 1) - Mc

        if variant.uses_jump_penalty:
            dn = np.einsum("eqic,ec->eqi", SP, normals)
            pen = 0.5 * (np.einsum("eq,eqic,eqjc->eij", wq, SP, SP)
                         + np.einsum("eq,eqi,eqj->eij", wq, dn, dn))
            local = local + (variant.eta / lengths)[:, None, None] * pen

        kappa = 0.5 if interior else 1.0
        inv_area = sum(1.0 / mesh.areas[tris] for tris, _, _ in sides)
        if variant.uses_local_lifting:
            lift = np.einsum("eia,ab,ejb->eij", J, WD, J)
            local = local + (variant.eta * kappa ** 2 * inv_area)[:, None, None] \
                * lift
        if variant.uses_global_lifting:
            for tris, _, _ in sides:
                coef = (-kappa / mesh.areas[tris])[:, None, None] * J  # (ne,ndl,3)
                rr = (3 * tris[:, None, None]
                      + np.arange(3)[None, None, :]) * np.ones(
                          (1, ndl, 1), dtype=np.int64)
                cc = dofs[:, :, None] * np.ones((1, 1, 3), dtype=np.int64)
                R_rows.append(rr.ravel())
                R_cols.append(cc.ravel())
                R_vals.append(coef.transpose(0, 1, 2).ravel())
        push(local, dofs)

    K = sp.coo_matrix(
        (np.concatenate(vals_acc),
         (np.concatenate(rows_acc), np.concatenate(cols_acc))),
        shape=(ndof, ndof)).tocsr()

    if variant.uses_global_lifting:
        R = sp.coo_matrix(
            (np.concatenate(R_vals),
             (np.concatenate(R_rows), np.concatenate(R_cols))),
            shape=(3 * mesh.n_triangles, ndof)).tocsr()
        blocks = mesh.areas[:, None, None] * WD[None, :, :]
        M_mid = sp.bsr_matrix(
            (blocks, np.arange(mesh.n_triangles),
             np.arange(mesh.n_triangles + 1)),
            shape=(3 * mesh.n_triangles, 3 * mesh.n_triangles))
        K = (K + R.T @ (M_mid @ R)).tocsr()
    return K


def assemble_load(mesh: Mesh, data: ProblemData) -> np.ndarray:
    """Load vector: volume term by the vertex rule, traction by 2-pt Gauss."""
    F = np.zeros((mesh.n_triangles, 3, 2))
    pts = mesh.vertices[mesh.triangles].reshape(-1, 2)
    fvals = evaluate_vector_field(data.f, pts).reshape(mesh.n_triangles, 3, 2)
    F += mesh.areas[:, None, None] / 3.0 * fvals

    edge_ids = mesh.edge_ids(BoundaryLabel.TRACTION)
    if len(edge_ids):
        tris, la, lb = _boundary_side(mesh, edge_ids)
        a = mesh.vertices[mesh.edges[edge_ids, 0]]
        b = mesh.vertices[mesh.edges[edge_ids, 1]]
        for s, w in zip(GAUSS2_POINTS, GAUSS2_WEIGHTS):
            x = a + s * (b - a)
            gx = evaluate_vector_field(data.g, x)
            wq = (w * mesh.edge_lengths[edge_ids])[:, None]
            np.add.at(F, (tris, la), wq * (1.0 - s) * gx)
            np.add.at(F, (tris, lb), wq * s * gx)
    return F.reshape(-1)


def assemble_system(mesh: Mesh, variant: MethodVariant,
                    data: ProblemData) -> AssembledSystem:
    K = assemble_bilinear(mesh, variant, data.mat)
    F = assemble_load(mesh, data)
    table = build_contact_table(mesh, data)
    T_n, T_t = contact_trace_matrices(mesh, table)
    return AssembledSystem(mesh=mesh, variant=variant, data=data, K=K, F=F,
                           table=table, T_n=T_n, T_t=T_t)


def _edge_normal_endpoint_values(u_flat, mesh, table, k):
    """Normal displacement of u at the two endpoints of contact edge k."""
    t, la, lb = int(table.tris[k]), int(table.locals_a[k]), \
        int(table.locals_b[k])
    n = mesh.edge_normals[table.edge_ids[k]]
    c = u_flat.reshape(-1, 3, 2)[t]
    return float(c[la] @ n), float(c[lb] @ n), t, la, lb, n


def _active_subintervals(d0, d1):
    """Intervals of [0,1] where the affine d(s) = d0 + s (d1-d0) is > 0."""
    if d0 <= 0.0 and d1 <= 0.0:
        return []
    if d0 > 0.0 and d1 > 0.0:
        return [(0.0, 1.0)]
    root = d0 / (d0 - d1)
    return [(root, 1.0)] if d1 > 0.0 else [(0.0, root)]


def compliance_residual(u: DGFunction, data: ProblemData,
                        table: ContactTable | None = None):
    """Normal-compliance boundary term and its generalized tangent.

    The integrand has a kink where the penetration changes sign; each
    contact edge is split at the exact root of the affine penetration, which
    restores Gauss exactness for integer exponents.
    """
    mesh = u.mesh
    if table is None:
        table = build_contact_table(mesh, data)
    ndof = 6 * mesh.n_triangles
    r = np.zeros(ndof)
    rows, cols, vals = [], [], []
    m = data.m_n
    u_flat = u.flat
    for k in range(table.n_edges):
        e = table.edge_ids[k]
        un0, un1, t, la, lb, n = _edge_normal_endpoint_values(
            u_flat, mesh, table, k)
        pa = mesh.vertices[mesh.edges[e, 0]]
        pb = mesh.vertices[mesh.edges[e, 1]]
        ga0, ga1 = evaluate_scalar_field(data.g_a, np.stack([pa, pb]))
        d0, d1 = un0 - ga0, un1 - ga1
        length = mesh.edge_lengths[e]
        dof6 = 6 * t + np.arange(6)
        for s_lo, s_hi in _active_subintervals(d0, d1):
            span = s_hi - s_lo
            if span <= 0.0:
                continue
            s = s_lo + GAUSS4_POINTS * span
            w = GAUSS4_WEIGHTS * span * length
            x = pa + s[:, None] * (pb - pa)
            cn = evaluate_scalar_field(data.c_n, x)
            dval = np.maximum(d0 + s * (d1 - d0), 0.0)
            # basis normal traces (nq, 6)
            phi_n = np.zeros((len(s), 6))
            for c in range(2):
                phi_n[:, 2 * la + c] += (1.0 - s) * n[c]
                phi_n[:, 2 * lb + c] += s * n[c]
            r[dof6] += (w * cn * dval ** m) @ phi_n
            slope = w * cn * m * dval ** (m - 1)
            block = np.einsum("q,qi,qj->ij", slope, phi_n, phi_n)
            rows.append(np.repeat(dof6, 6))
            cols.append(np.tile(dof6, 6))
            vals.append(block.ravel())
    if rows:
        Jmat = sp.coo_matrix(
            (np.concatenate(vals),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(ndof, ndof)).tocsr()
    else:
        Jmat = sp.csr_matrix((ndof, ndof))
    return r, Jmat


def compliance_energy(u: DGFunction, data: ProblemData,
                      table: ContactTable | None = None) -> float:
    """Exact integral of c_n (u_n - g_a)_+^(m_n+1) / (m_n+1) over contact."""
    mesh = u.mesh
    if table is None:
        table = build_contact_table(mesh, data)
    m = data.m_n
    total = 0.0
    u_flat = u.flat
    for k in range(table.n_edges):
        e = table.edge_ids[k]
        un0, un1, *_ = _edge_normal_endpoint_values(u_flat, mesh, table, k)
        pa = mesh.vertices[mesh.edges[e, 0]]
        pb = mesh.vertices[mesh.edges[e, 1]]
        ga0, ga1 = evaluate_scalar_field(data.g_a, np.stack([pa, pb]))
        d0, d1 = un0 - ga0, un1 - ga1
        length = mesh.edge_lengths[e]
        for s_lo, s_hi in _active_subintervals(d0, d1):
            span = s_hi - s_lo
            s = s_lo + GAUSS4_POINTS * span
            w = GAUSS4_WEIGHTS * span * length
            x = pa + s[:, None] * (pb - pa)
            cn = evaluate_scalar_field(data.c_n, x)
            dval = np.maximum(d0 + s * (d1 - d0), 0.0)
            total += float(np.dot(w, cn * dval ** (m + 1))) / (m + 1)
    return total


def friction_coupling(lam, data: ProblemData, system: AssembledSystem) -> np.ndarray:
    """Load contribution of the friction multiplier,
    G_i = integral(c_tau lambda . (phi_i)_tau) over the contact boundary."""
    values = np.asarray(lam.values if hasattr(lam, "values") else lam,
                        dtype=float)
    table = system.table
    if values.shape != (table.n_points, 2):
        raise ValueError("multiplier shape does not match the contact table")
    norms = np.linalg.norm(values, axis=1)
    if np.any(norms > 1.0 + 1e-12):
        raise ValueError("multiplier is infeasible: |lambda| exceeds 1")
    lam_s = np.einsum("qi,qi->q", values, table.tangents)
    return system.T_t.T @ (table.weights * table.c_tau * lam_s)
