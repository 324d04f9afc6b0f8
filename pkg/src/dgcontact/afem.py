"""Adaptive SOLVE -> ESTIMATE -> MARK -> REFINE loop and the uniform-mesh
convergence study with consecutive-mesh errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .assembly import MethodVariant, ProblemData, assemble_system
from .dgspace import DGFunction, dg_norm, embed
from .estimator import EstimatorBreakdown, compute_estimator
from .mesh import BoundaryLabel, Mesh, build_rectangle_mesh, dorfler_mark, \
    refine_nvb
from .solver import FrictionMultiplier, SolverError, uzawa_solve


@dataclass
class ProblemSetup:
    """Everything needed to run a study: geometry, data, method, solver."""
    corner_lo: tuple
    corner_hi: tuple
    labeler: object
    data: ProblemData
    variant: MethodVariant
    n0: int = 2
    rho: float | None = None
    tol: float = 1e-8
    max_outer: int = 5000
    tol_inner: float = 1e-10
    warm_start: bool = True

    def base_mesh(self, n=None):
        return build_rectangle_mesh(self.corner_lo, self.corner_hi,
                                    self.n0 if n is None else n, self.labeler)


@dataclass
class StudyRecord:
    level: int
    h: float | None
    ndof: int
    error: float | None = None
    order: float | None = None
    eta_h: float | None = None
    eta_parts: tuple | None = None
    n_marked: int | None = None
    outer_iterations: int | None = None
    wall_time: float | None = None

    def to_dict(self):
        out = {"level": self.level, "h": self.h, "ndof": self.ndof,
               "error": self.error, "order": self.order, "eta_h": self.eta_h,
               "n_marked": self.n_marked,
               "outer_iterations": self.outer_iterations,
               "wall_time": self.wall_time}
        if self.eta_parts is not None:
            for name, val in zip(("eta1", "eta2", "eta3", "eta4", "eta5",
                                  "eta6"), self.eta_parts):
                out[name] = val
        return out


@dataclass
class StudyResult:
    records: list
    meshes: list = field(default_factory=list)
    solution: DGFunction | None = None
    multiplier: FrictionMultiplier | None = None
    breakdown: EstimatorBreakdown | None = None
    reports: list = field(default_factory=list)
    aborted: bool = False
    abort_reason: str | None = None


def transfer_multiplier(old: FrictionMultiplier, new_table):
    """Warm-start values at new contact points from the nearest old ones."""
    if old is None or old.table.n_points == 0 or new_table.n_points == 0:
        return None
    tree = cKDTree(old.table.points)
    _, nearest = tree.query(new_table.points)
    return old.values[nearest]


def _solve_on(setup, mesh, prev_u=None, prev_lam=None):
    system = assemble_system(mesh, setup.variant, setup.data)
    u0 = None
    lam0 = None
    if setup.warm_start and prev_u is not None:
        u0 = embed(prev_u, mesh).flat
        lam0 = transfer_multiplier(prev_lam, system.table)
    u, lam, report = uzawa_solve(
        system, rho=setup.rho, tol=setup.tol, max_outer=setup.max_outer,
        tol_inner=setup.tol_inner, u0=u0, lam0=lam0)
    return system, u, lam, report


def compute_orders(errors):
    """log2 ratios of consecutive errors; first entry has no order."""
    orders = [None]
    for a, b in zip(errors, errors[1:]):
        orders.append(float(np.log2(a / b)) if a > 0 and b > 0 else None)
    return orders


def uniform_study(setup: ProblemSetup, levels: int) -> StudyResult:
    """Solve on n = 2^1 .. 2^levels and report consecutive-mesh errors.

    The error attributed to level l is the DG-norm distance between the
    level-l solution (embedded exactly) and the level-(l+1) solution,
    evaluated on the finer mesh; orders are log2 ratios.
    """
    if levels < 2:
        raise ValueError("a uniform study needs at least two levels")
    result = StudyResult(records=[])
    solutions = []
    prev_u = prev_lam = None
    for lev in range(1, levels + 1):
        mesh = setup.base_mesh(n=2 ** lev)
        try:
            system, u, lam, report = _solve_on(setup, mesh, prev_u, prev_lam)
        except SolverError as err:
            result.aborted = True
            result.abort_reason = str(err)
            break
        breakdown = compute_estimator(u, lam, setup.data, setup.variant)
        solutions.append((mesh, u, breakdown, report))
        result.meshes.append(mesh)
        result.reports.append(report)
        prev_u, prev_lam = u, lam

    errors = []
    for (mesh_c, u_c, _, _), (mesh_f, u_f, _, _) in zip(solutions,
                                                        solutions[1:]):
        diff = DGFunction(mesh_f, embed(u_c, mesh_f).coeffs - u_f.coeffs)
        errors.append(dg_norm(diff, setup.data.mat).total)
    orders = compute_orders(errors)
    for i, err in enumerate(errors):
        mesh, _, breakdown, report = solutions[i]
        result.records.append(StudyRecord(
            level=i + 1, h=2.0 ** -(i + 1), ndof=6 * mesh.n_triangles,
            error=err, order=orders[i], eta_h=breakdown.eta_h,
            eta_parts=tuple(breakdown.eta_parts),
            outer_iterations=report.outer_iterations,
            wall_time=report.wall_time))
    if solutions:
        mesh, u, breakdown, _ = solutions[-1]
        result.solution = u
        result.breakdown = breakdown
    return result


def adaptive_loop(setup: ProblemSetup, theta: float = 0.3,
                  max_levels: int = 20, max_dof: int | None = None) \
        -> StudyResult:
    """Adaptive refinement driven by the residual indicators.

    Stops at the level cap, the dof cap, or a zero estimator; solver
    nonconvergence aborts with all completed levels preserved.
    """
    result = StudyResult(records=[])
    mesh = setup.base_mesh()
    prev_u = prev_lam = None
    for lev in range(max_levels):
        try:
            system, u, lam, report = _solve_on(setup, mesh, prev_u, prev_lam)
        except SolverError as err:
            result.aborted = True
            result.abort_reason = str(err)
            break
        breakdown = compute_estimator(u, lam, setup.data, setup.variant)
        indicators = breakdown.eta_elements
        record = StudyRecord(
            level=lev, h=float(mesh.h_tri.max()), ndof=6 * mesh.n_triangles,
            eta_h=breakdown.eta_h, eta_parts=tuple(breakdown.eta_parts),
            outer_iterations=report.outer_iterations,
            wall_time=report.wall_time)
        result.meshes.append(mesh)
        result.reports.append(report)
        result.solution, result.multiplier, result.breakdown = u, lam, \
            breakdown
        if breakdown.eta_h == 0.0:
            record.n_marked = 0
            result.records.append(record)
            break
        if max_dof is not None and 6 * mesh.n_triangles >= max_dof:
            record.n_marked = 0
            result.records.append(record)
            break
        if lev == max_levels - 1:
            record.n_marked = 0
            result.records.append(record)
            break
        marked = dorfler_mark(indicators, theta)
        record.n_marked = len(marked)
        result.records.append(record)
        mesh = refine_nvb(mesh, marked)
        prev_u, prev_lam = u, lam
    return result


def contact_refinement_ratio(mesh: Mesh) -> float:
    """Mean diameter of contact-adjacent triangles over the global mean."""
    contact_tris = np.unique(
        mesh.edge_tris[mesh.edge_ids(BoundaryLabel.CONTACT), 0])
    if len(contact_tris) == 0:
        return np.nan
    return float(mesh.h_tri[contact_tris].mean() / mesh.h_tri.mean())


def loglog_slope(x, y, last=10):
    """Least-squares slope of log(y) against log(x) over the trailing window."""
    x = np.asarray(x, dtype=float)[-last:]
    y = np.asarray(y, dtype=float)[-last:]
    keep = (x > 0) & (y > 0)
    lx, ly = np.log(x[keep]), np.log(y[keep])
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    return float(coef[0])
