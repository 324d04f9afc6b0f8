"""Uzawa iteration for the discrete contact problem with a semismooth
Newton inner solve for the normal-compliance nonlinearity.

The outer loop updates the friction multiplier at the contact quadrature
points by a projected gradient step (radial scaling onto the unit disc) and
stops on the relative max-norm increment of the displacement iterate; the
returned pair additionally satisfies the pointwise complementarity law to
the tolerance promised by the discrete characterization.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (AssembledSystem, ContactTable, compliance_energy,
                       compliance_residual)
from .dgspace import DGFunction

COMPLEMENTARITY_TOL = 1e-6
SLIP_THRESHOLD = 1e-8


class SolverError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class FrictionMultiplier:
    """Tangential multiplier stored at the contact quadrature points."""
    table: ContactTable
    values: np.ndarray  # (nq, 2), |value| <= 1, tangential

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(
            self.table.n_points, 2)

    @classmethod
    def zeros(cls, table):
        return cls(table, np.zeros((table.n_points, 2)))

    @property
    def scalars(self):
        return np.einsum("qi,qi->q", self.values, self.table.tangents)

    def max_magnitude(self):
        if self.table.n_points == 0:
            return 0.0
        return float(np.linalg.norm(self.values, axis=1).max())

    def check_feasible(self, tol=1e-12):
        if self.table.n_points == 0:
            return
        if self.max_magnitude() > 1.0 + tol:
            raise ValueError("multiplier leaves the unit disc")
        if float(np.abs(np.einsum(
                "qi,qi->q", self.values, self.table.normals)).max()) > tol:
            raise ValueError("multiplier has a normal component")


def project_to_disc(values):
    """Radial scaling onto the unit disc, pointwise."""
    norms = np.linalg.norm(values, axis=1)
    scale = np.where(norms > 1.0, norms, 1.0)
    return values / scale[:, None]


@dataclass
class SolveReport:
    outer_iterations: int = 0
    inner_iterations: list = field(default_factory=list)
    final_increment: float = np.inf
    residual_norms: list = field(default_factory=list)
    wall_time: float = 0.0
    rho_history: list = field(default_factory=list)
    complementarity_residual: float = 0.0
    multiplier_increment: float = np.inf
    converged: bool = False
    warnings: list = field(default_factory=list)
    trace: list = field(default_factory=list)  # (outer, increment, residual, complementarity)

    def to_dict(self):
        return {
            "outer_iterations": self.outer_iterations,
            "inner_iterations": list(map(int, self.inner_iterations)),
            "final_increment": float(self.final_increment),
            "residual_norms": list(map(float, self.residual_norms)),
            "wall_time": float(self.wall_time),
            "rho_history": list(map(float, self.rho_history)),
            "complementarity_residual": float(self.complementarity_residual),
            "multiplier_increment": float(self.multiplier_increment),
            "converged": bool(self.converged),
            "warnings": list(self.warnings),
        }


def linear_solve(K, rhs) -> np.ndarray:
    """Sparse direct solve with one step of iterative refinement."""
    lu = spla.splu(sp.csc_matrix(K))
    x = lu.solve(rhs)
    x += lu.solve(rhs - K @ x)
    if not np.all(np.isfinite(x)):
        raise SolverError("linear solve produced non-finite values")
    return x


class _Workspace:
    """Factorization cache shared across the Uzawa outer loop."""

    def __init__(self, system: AssembledSystem):
        self.system = system
        self.base_lu = spla.splu(sp.csc_matrix(system.K))
        self.K_norm1 = float(abs(system.K).sum(axis=0).max())
        self._dual_diag = None

    def slip_response(self):
        """Dense slip response S = T_t K^-1 T_t^T, built in chunks."""
        if self._dual_diag is None:
            Tt = self.system.T_t.tocsr()
            nq = Tt.shape[0]
            S = np.empty((nq, nq))
            chunk = 256
            cols = sp.csc_matrix(Tt.T)
            for lo in range(0, nq, chunk):
                hi = min(lo + chunk, nq)
                Z = self.base_lu.solve(cols[:, lo:hi].toarray())
                S[:, lo:hi] = Tt @ Z
            self._dual_diag = S
        return self._dual_diag


def _residual(system, u_flat, F_eff):
    u = DGFunction.from_flat(system.mesh, u_flat)
    r, J = compliance_residual(u, system.data, system.table)
    R = system.K @ u_flat + r - F_eff
    return R, J


def inner_newton(system: AssembledSystem, F_eff, u0=None, tol_inner=1e-10,
                 max_inner=50, workspace=None):
    """Semismooth Newton for K u + r(u) = F_eff.

    Uses the factorization of K alone while the compliance term is a small
    perturbation (the common case), switching to fresh generalized tangents
    with halving line search whenever that stalls.
    """
    if workspace is None:
        workspace = _Workspace(system)
    ndof = system.n_dofs
    u = np.zeros(ndof) if u0 is None else np.array(u0, dtype=float)
    tol_abs = tol_inner * (1.0 + float(np.abs(F_eff).max(initial=0.0)))

    R, J = _residual(system, u, F_eff)
    no_compliance = J.nnz == 0 and not np.any(
        system.table.c_n * system.table.weights)
    if no_compliance and np.all(u == 0.0):
        u = workspace.base_lu.solve(F_eff)
        u += workspace.base_lu.solve(F_eff - system.K @ u)
        R, J = _residual(system, u, F_eff)
        return u, 1, float(np.abs(R).max(initial=0.0))

    stale_ok = J.nnz == 0 or _norm1(J) < 1e-3 * workspace.K_norm1
    lu = workspace.base_lu if stale_ok else None
    fresh = not stale_ok
    iters = 0
    while True:
        Rnorm = float(np.abs(R).max(initial=0.0))
        if Rnorm <= tol_abs:
            break
        if iters >= max_inner:
            raise SolverError(
                f"inner Newton did not converge in {max_inner} steps "
                f"(residual {Rnorm:.3e})")
        if lu is None:
            lu = spla.splu(sp.csc_matrix(system.K + J))
        delta = -lu.solve(R)
        alpha, accepted = 1.0, False
        for _ in range(30):
            u_try = u + alpha * delta
            R_try, J_try = _residual(system, u_try, F_eff)
            if float(np.abs(R_try).max(initial=0.0)) < Rnorm:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if not fresh:
                fresh, lu = True, None
                continue
            floor = 100 * np.finfo(float).eps * (
                workspace.K_norm1 * np.abs(u).max(initial=0.0)
                + np.abs(F_eff).max(initial=0.0))
            if Rnorm <= max(floor, tol_abs):
                break
            raise SolverError("inner Newton line search failed to descend")
        u, R, J = u_try, R_try, J_try
        iters += 1
        if fresh:
            lu = None  # tangent changes with the iterate
        elif float(np.abs(R).max(initial=0.0)) > 0.3 * Rnorm:
            fresh, lu = True, None
    return u, max(iters, 1), float(np.abs(R).max(initial=0.0))


def _norm1(A):
    return float(abs(A).sum(axis=0).max()) if A.nnz else 0.0


def _complementarity(lam_scalars, slips):
    """Max defect of lambda . u_tau = |u_tau|, relative per the contract."""
    if len(slips) == 0:
        return 0.0, True
    defect = np.abs(lam_scalars * slips - np.abs(slips))
    ok = np.all(defect <= COMPLEMENTARITY_TOL * np.maximum(1.0, np.abs(slips)))
    moving = np.abs(slips) > SLIP_THRESHOLD
    if np.any(moving):
        ratio = lam_scalars[moving] * np.sign(slips[moving])
        ok = ok and bool(np.all(ratio >= 1.0 - COMPLEMENTARITY_TOL))
    return float(defect.max()), bool(ok)


def energy_functional(system: AssembledSystem, u: DGFunction) -> float:
    """Primal energy (meaningful for the symmetric variant): elastic part,
    compliance potential, friction dissipation at the quadrature points,
    minus the load."""
    u_flat = u.flat
    table = system.table
    slips = system.T_t @ u_flat
    j_tau = float(np.dot(table.weights * table.c_tau, np.abs(slips)))
    return (0.5 * float(u_flat @ (system.K @ u_flat))
            + compliance_energy(u, system.data, system.table)
            + j_tau - float(system.F @ u_flat))


def _dual_sweeps(lam_s, slips, S, w_ct, max_sweeps=40, tol=1e-14):
    """Projected Gauss-Seidel ascent of the friction dual.

    Coordinate-wise exact maximization over the unit interval per point,
    using the linear slip response model s(lam) = s0 - S diag(w c) dlam.
    Monotone and unconditionally convergent; the fixed point is the same
    pointwise projection law the classical update targets.
    """
    s = slips.copy()
    lam_s = lam_s.copy()
    active = np.nonzero(w_ct > 0)[0]
    diag = S.diagonal()
    scale = max(float(np.abs(s).max(initial=0.0)), 1e-300)
    for _ in range(max_sweeps):
        biggest = 0.0
        for q in active:
            denom = diag[q] * w_ct[q]
            if denom <= 0.0:
                continue
            target = min(1.0, max(-1.0, lam_s[q] + s[q] / denom))
            delta = target - lam_s[q]
            if delta == 0.0:
                continue
            lam_s[q] = target
            s -= S[:, q] * (w_ct[q] * delta)
            biggest = max(biggest, abs(delta) * denom)
        if biggest <= tol * scale:
            break
    return lam_s


def uzawa_solve(system: AssembledSystem, rho=None, tol=1e-8, max_outer=5000,
                tol_inner=1e-10, max_inner=50, u0=None, lam0=None,
                collect_trace=False):
    """Solve the discrete quasi-variational inequality.

    Alternates an inner displacement solve with pointwise projected
    multiplier updates.  By default the multiplier update runs projected
    Gauss-Seidel sweeps on the measured slip response, which keeps the
    spectral coupling of the contact boundary under control; passing a
    uniform positive ``rho`` forces the classical single projected step
    lam <- P(lam + rho u_tau) instead.  Both reach the same fixed point.

    Returns (displacement, friction multiplier, report).
    """
    data = system.data
    table = system.table
    if rho is not None and not float(rho) > 0:
        raise ValueError("Uzawa step rho must be positive")
    t_start = time.perf_counter()
    ws = _Workspace(system)
    report = SolveReport()
    trace = []

    lam = np.zeros((table.n_points, 2)) if lam0 is None else \
        project_to_disc(np.array(lam0, dtype=float).reshape(-1, 2))
    u = np.zeros(system.n_dofs) if u0 is None else np.array(u0, dtype=float)
    frictionless = table.n_points == 0 or \
        not np.any(table.weights * table.c_tau)
    w_ct = table.weights * table.c_tau
    if rho is not None:
        report.rho_history.append(float(rho))
    S = None

    for outer in range(1, max_outer + 1):
        lam_s = np.einsum("qi,qi->q", lam, table.tangents)
        G = system.T_t.T @ (w_ct * lam_s)
        u_new, nin, rnorm = inner_newton(
            system, system.F - G, u0=u, tol_inner=tol_inner,
            max_inner=max_inner, workspace=ws)
        report.inner_iterations.append(nin)
        report.residual_norms.append(rnorm)

        scale = float(np.abs(u_new).max(initial=0.0))
        diff = float(np.abs(u_new - u).max(initial=0.0))
        inc = diff / scale if scale > 0 else (0.0 if diff == 0.0 else np.inf)
        slips = system.T_t @ u_new
        if frictionless:
            u = u_new
            report.outer_iterations = outer
            report.final_increment = inc
            report.multiplier_increment = 0.0
            report.converged = True
            break

        if rho is not None:
            u_tau = slips[:, None] * table.tangents
            lam_new = project_to_disc(lam + rho * u_tau)
        else:
            if S is None:
                S = ws.slip_response()
            lam_s_new = _dual_sweeps(lam_s, slips, S, w_ct)
            lam_new = lam_s_new[:, None] * table.tangents
        # points the dual never sees keep the alignment law directly
        idle = (w_ct == 0) & (np.abs(slips) > SLIP_THRESHOLD)
        if np.any(idle):
            lam_new[idle] = (np.sign(slips[idle])[:, None]
                             * table.tangents[idle])
        lam_inc = float(np.abs(lam_new - lam).max(initial=0.0))

        comp_res, comp_ok = _complementarity(
            np.einsum("qi,qi->q", lam_new, table.tangents), slips)
        u, lam = u_new, lam_new
        if collect_trace:
            trace.append((outer, inc, rnorm, comp_res))

        report.outer_iterations = outer
        report.final_increment = inc
        report.multiplier_increment = lam_inc
        report.complementarity_residual = comp_res
        if inc <= tol and comp_ok:
            report.converged = True
            break

    if not report.converged:
        report.wall_time = time.perf_counter() - t_start
        raise SolverError(
            f"Uzawa did not converge in {max_outer} outer iterations "
            f"(increment {report.final_increment:.3e}); try a smaller rho",
            report=report)

    report.wall_time = time.perf_counter() - t_start
    report.trace = trace
    u_fn = DGFunction.from_flat(system.mesh, u)
    return u_fn, FrictionMultiplier(table, lam), report
