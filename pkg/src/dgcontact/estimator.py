"""Residual a posteriori error estimator and data-oscillation diagnostics.

Six squared contributions are accumulated into a per-element table (volume
term on its element, interior-edge terms split half/half between the two
neighbours, boundary-edge terms on the unique neighbour), so the global
parts, the total and the per-element indicators are additive by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import MethodVariant, ProblemData, build_contact_table
from .dgspace import (GAUSS2_POINTS, GAUSS2_WEIGHTS, GAUSS4_POINTS,
                      GAUSS4_WEIGHTS, TRI_MID_BARY, TRI_MID_WEIGHTS,
                      DGFunction, evaluate_scalar_field,
                      evaluate_vector_field, stress_all)
from .mesh import BoundaryLabel, Mesh

TERM_NAMES = ("volume_load", "stress_jump", "displacement_jump",
              "friction_traction", "traction_mismatch", "compliance_mismatch")


@dataclass
class EstimatorBreakdown:
    mesh: Mesh
    per_element_terms: np.ndarray  # (nt, 6) squared contributions

    @property
    def eta_parts(self):
        """The six global contributions (square roots of the term sums)."""
        return np.sqrt(self.per_element_terms.sum(axis=0))

    @property
    def eta_h(self):
        return float(np.sqrt(self.per_element_terms.sum()))

    @property
    def eta_elements(self):
        """Per-element indicators eta_T."""
        return np.sqrt(self.per_element_terms.sum(axis=1))


@dataclass
class OscillationReport:
    f: float
    g: float
    c_tau: float
    lambda_tau: None = None  # exact multiplier unknown; not computable

    def to_dict(self):
        return {"f": self.f, "g": self.g, "c_tau": self.c_tau,
                "lambda_tau": None}


def _edge_points(mesh, edge_ids, s_nodes):
    a = mesh.vertices[mesh.edges[edge_ids, 0]]
    b = mesh.vertices[mesh.edges[edge_ids, 1]]
    return a[:, None, :] + s_nodes[None, :, None] * (b - a)[:, None, :]


def compute_estimator(u: DGFunction, lam, data: ProblemData,
                      variant: MethodVariant) -> EstimatorBreakdown:
    """Evaluate the six residual contributions for a computed solution.

    ``lam`` is a FrictionMultiplier (or raw (nq, 2) values matching the
    contact table of the mesh).  The displacement-jump term carries the
    penalty factor of the chosen variant, so the total depends on eta.
    """
    mesh = u.mesh
    nt = mesh.n_triangles
    terms = np.zeros((nt, 6))
    sigma = stress_all(u, data.mat)

    # volume load term: h_T^2 ||f||^2, midpoint rule (exact for affine f)
    verts = mesh.vertices[mesh.triangles]
    mids = np.einsum("qv,tvx->tqx", TRI_MID_BARY, verts)
    fvals = evaluate_vector_field(data.f, mids.reshape(-1, 2)) \
        .reshape(nt, 3, 2)
    f_sq = np.einsum("q,tqx->t", TRI_MID_WEIGHTS, fvals ** 2) * mesh.areas
    terms[:, 0] = mesh.h_tri ** 2 * f_sq

    # interior stress jumps: h_e ||[[sigma]]||^2, split between neighbours
    inner = mesh.interior_edges
    if len(inner):
        tp = mesh.edge_tris[inner, 0]
        tm = mesh.edge_tris[inner, 1]
        n = mesh.edge_normals[inner]
        sv = sigma.voigt
        jump = np.empty((len(inner), 2))
        dv = sv[tp] - sv[tm]
        jump[:, 0] = dv[:, 0] * n[:, 0] + dv[:, 2] * n[:, 1]
        jump[:, 1] = dv[:, 2] * n[:, 0] + dv[:, 1] * n[:, 1]
        h = mesh.edge_lengths[inner]
        vals = h * (jump ** 2).sum(axis=1) * h  # h_e * |e| * |jump|^2
        np.add.at(terms[:, 1], tp, 0.5 * vals)
        np.add.at(terms[:, 1], tm, 0.5 * vals)

    # displacement jumps with the penalty factor: (eta / h_e) ||[[u]]||^2
    for edge_ids, interior in ((inner, True),
                               (mesh.edge_ids(BoundaryLabel.DIRICHLET), False)):
        if len(edge_ids) == 0:
            continue
        tp = mesh.edge_tris[edge_ids, 0]
        n = mesh.edge_normals[edge_ids]
        a = mesh.edges[edge_ids, 0]
        b = mesh.edges[edge_ids, 1]
        tvp = mesh.triangles[tp]
        lap = np.argmax(tvp == a[:, None], axis=1)
        lbp = np.argmax(tvp == b[:, None], axis=1)
        vals = np.zeros(len(edge_ids))
        for s, w in zip(GAUSS2_POINTS, GAUSS2_WEIGHTS):
            tr = (1 - s) * u.coeffs[tp, lap] + s * u.coeffs[tp, lbp]
            if interior:
                tm = mesh.edge_tris[edge_ids, 1]
                tvm = mesh.triangles[tm]
                lam_ = np.argmax(tvm == a[:, None], axis=1)
                lbm = np.argmax(tvm == b[:, None], axis=1)
                tr = tr - ((1 - s) * u.coeffs[tm, lam_] + s * u.coeffs[tm, lbm])
            dn = np.einsum("ec,ec->e", tr, n)
            vals += w * 0.5 * ((tr ** 2).sum(axis=1) + dn ** 2)
        vals *= variant.eta  # (eta/h_e) * |e| * mean = eta * mean
        if interior:
            np.add.at(terms[:, 2], tp, 0.5 * vals)
            np.add.at(terms[:, 2], mesh.edge_tris[edge_ids, 1], 0.5 * vals)
        else:
            np.add.at(terms[:, 2], tp, vals)

    # traction mismatch on the Neumann part: h_e ||sigma n - g||^2
    trac = mesh.edge_ids(BoundaryLabel.TRACTION)
    if len(trac):
        tp = mesh.edge_tris[trac, 0]
        n = mesh.edge_normals[trac]
        sv = sigma.voigt[tp]
        sn = np.stack([sv[:, 0] * n[:, 0] + sv[:, 2] * n[:, 1],
                       sv[:, 2] * n[:, 0] + sv[:, 1] * n[:, 1]], axis=1)
        pts = _edge_points(mesh, trac, GAUSS4_POINTS)
        gv = evaluate_vector_field(data.g, pts.reshape(-1, 2)) \
            .reshape(len(trac), -1, 2)
        mis = ((sn[:, None, :] - gv) ** 2).sum(axis=2)
        h = mesh.edge_lengths[trac]
        vals = h * h * (mis @ GAUSS4_WEIGHTS)
        np.add.at(terms[:, 4], tp, vals)

    # contact terms use the shared contact quadrature points
    table = build_contact_table(mesh, data)
    if table.n_points:
        lam_values = np.asarray(
            lam.values if hasattr(lam, "values") else lam,
            dtype=float).reshape(table.n_points, 2)
        nq_e = len(GAUSS4_POINTS)
        sv = sigma.voigt[table.tris]
        n = mesh.edge_normals[table.edge_ids]
        sn_vec = np.stack([sv[:, 0] * n[:, 0] + sv[:, 2] * n[:, 1],
                           sv[:, 2] * n[:, 0] + sv[:, 1] * n[:, 1]], axis=1)
        sigma_nn = np.einsum("ec,ec->e", sn_vec, n)
        sigma_t = sn_vec - sigma_nn[:, None] * n

        h = mesh.edge_lengths[table.edge_ids]
        w = GAUSS4_WEIGHTS
        # friction consistency: h_e ||sigma_t + c_tau lambda||^2
        fr = (sigma_t[:, None, :]
              + table.c_tau.reshape(-1, nq_e)[:, :, None]
              * lam_values.reshape(-1, nq_e, 2))
        vals4 = h * h * (np.einsum("eqc,eqc->eq", fr, fr) @ w)
        np.add.at(terms[:, 3], table.tris, vals4)

        # compliance consistency: h_e ||sigma_n + c_n (u_n - g_a)_+^m||^2
        a = mesh.vertices[mesh.edges[table.edge_ids, 0]]
        b = mesh.vertices[mesh.edges[table.edge_ids, 1]]
        coeffs = u.coeffs[table.tris]
        un_a = np.einsum("evc,ec->ev", coeffs, n)
        un0 = un_a[np.arange(len(table.edge_ids)), table.locals_a]
        un1 = un_a[np.arange(len(table.edge_ids)), table.locals_b]
        s_nodes = GAUSS4_POINTS
        un = un0[:, None] * (1 - s_nodes)[None, :] + \
            un1[:, None] * s_nodes[None, :]
        ga = table.g_a.reshape(-1, nq_e)
        cn = table.c_n.reshape(-1, nq_e)
        pen = np.maximum(un - ga, 0.0) ** data.m_n
        mis = (sigma_nn[:, None] + cn * pen) ** 2
        vals6 = h * h * (mis @ w)
        np.add.at(terms[:, 5], table.tris, vals6)

    return EstimatorBreakdown(mesh=mesh, per_element_terms=terms)


def per_element_indicators(breakdown: EstimatorBreakdown) -> np.ndarray:
    """Localized indicators eta_T; their squares sum to eta_h^2."""
    return breakdown.eta_elements


def compute_oscillations(data: ProblemData, mesh: Mesh) -> OscillationReport:
    """Distance of the data from piecewise constants, per the efficiency
    bound; the oscillation of the exact multiplier is not computable."""
    verts = mesh.vertices[mesh.triangles]
    mids = np.einsum("qv,tvx->tqx", TRI_MID_BARY, verts)
    fv = evaluate_vector_field(data.f, mids.reshape(-1, 2)) \
        .reshape(mesh.n_triangles, 3, 2)
    fbar = np.einsum("q,tqc->tc", TRI_MID_WEIGHTS, fv)
    dev = ((fv - fbar[:, None, :]) ** 2).sum(axis=2)
    osc_f_sq = float(np.sum(mesh.h_tri ** 2 * mesh.areas
                            * np.einsum("q,tq->t", TRI_MID_WEIGHTS, dev)))

    def edge_osc_sq(edge_ids, fn, vector):
        if len(edge_ids) == 0:
            return 0.0
        pts = _edge_points(mesh, edge_ids, GAUSS4_POINTS)
        flat = pts.reshape(-1, 2)
        vals = (evaluate_vector_field(fn, flat).reshape(len(edge_ids), -1, 2)
                if vector else
                evaluate_scalar_field(fn, flat)
                .reshape(len(edge_ids), -1, 1))
        mean = np.einsum("q,eqc->ec", GAUSS4_WEIGHTS, vals)
        dev = ((vals - mean[:, None, :]) ** 2).sum(axis=2)
        h = mesh.edge_lengths[edge_ids]
        return float(np.sum(h * h * (dev @ GAUSS4_WEIGHTS)))

    osc_g_sq = edge_osc_sq(mesh.edge_ids(BoundaryLabel.TRACTION), data.g, True)
    osc_ct_sq = edge_osc_sq(mesh.edge_ids(BoundaryLabel.CONTACT),
                            data.c_tau, False)
    return OscillationReport(f=np.sqrt(osc_f_sq), g=np.sqrt(osc_g_sq),
                             c_tau=np.sqrt(osc_ct_sq))
