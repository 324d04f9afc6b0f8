"""Command-line entry point: uniform and adaptive study drivers plus a
one-shot estimator for saved solutions.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback

import numpy as np

from .afem import adaptive_loop, contact_refinement_ratio, uniform_study
from .assembly import build_contact_table
from .config import ConfigError, load_preset, parse_config, validate_config
from .estimator import compute_estimator, compute_oscillations
from .solver import FrictionMultiplier, SolverError
from .vtkio import (load_solution, save_solution, write_csv, write_dg_vtk,
                    write_json, write_matrix_market, write_mesh_vtk,
                    write_coefficients_csv)

STUDY_COLUMNS = ("level", "h", "ndof", "error", "order", "eta_h", "eta1",
                 "eta2", "eta3", "eta4", "eta5", "eta6", "n_marked",
                 "outer_iterations", "wall_time")


def _resolve_config(args):
    if bool(args.config) == bool(args.preset):
        raise ConfigError("give exactly one of --config or --preset")
    cfg = parse_config(args.config) if args.config else \
        load_preset(args.preset)
    raw = cfg.serialize()
    if args.method:
        raw["method"]["kind"] = args.method
    if args.theta is not None:
        raw["study"]["theta"] = args.theta
    if args.levels is not None:
        raw["study"]["levels"] = args.levels
    if args.out:
        raw["study"]["out"] = args.out
    raw["study"]["kind"] = args.command if args.command in \
        ("uniform", "adaptive") else raw["study"]["kind"]
    return validate_config(raw)


def _record_rows(records):
    rows = []
    for rec in records:
        d = rec.to_dict()
        rows.append([d.get(c) for c in STUDY_COLUMNS])
    return rows


def _write_common(outdir, cfg, result, report_extra):
    records = result.records
    write_csv(os.path.join(outdir, "study.csv"), STUDY_COLUMNS,
              _record_rows(records))
    report = {
        "config": cfg.serialize(),
        "aborted": result.aborted,
        "abort_reason": result.abort_reason,
        "warnings": [],
        "levels": [rec.to_dict() for rec in records],
        "solver_reports": [rep.to_dict() for rep in result.reports],
    }
    warn = cfg.traction_scale_warning()
    if warn:
        report["warnings"].append(warn)
    report.update(report_extra)
    write_json(os.path.join(outdir, "report.json"), report)
    if result.solution is not None:
        mesh = result.solution.mesh
        cell = {}
        if result.breakdown is not None:
            cell["indicator"] = result.breakdown.eta_elements
        write_mesh_vtk(os.path.join(outdir, "final_mesh.vtk"), mesh, cell)
        write_dg_vtk(os.path.join(outdir, "final_solution.vtk"),
                     result.solution, cell)
        write_coefficients_csv(os.path.join(outdir, "final_coefficients.csv"),
                               result.solution)
        save_solution(os.path.join(outdir, "solution.npz"), mesh,
                      result.solution, result.multiplier, cfg.serialize())
    if result.reports:
        trace = result.reports[-1].trace or []
        write_csv(os.path.join(outdir, "final_trace.csv"),
                  ("iteration", "increment", "residual", "complementarity"),
                  trace)
    return report


def run(cfg) -> int:
    """Execute the configured study; returns the process exit status."""
    outdir = cfg.out_dir
    os.makedirs(outdir, exist_ok=True)
    try:
        setup = cfg.setup()
        if cfg.study_kind == "uniform":
            result = uniform_study(setup, cfg.levels)
            report = _write_common(outdir, cfg, result, {})
        else:
            result = adaptive_loop(setup, theta=cfg.theta,
                                   max_levels=cfg.levels,
                                   max_dof=cfg.max_dof)
            write_csv(os.path.join(outdir, "eta_vs_dof.csv"),
                      ("level", "ndof", "eta_h"),
                      [(r.level, r.ndof, r.eta_h) for r in result.records])
            for rec, mesh in zip(result.records, result.meshes):
                write_mesh_vtk(
                    os.path.join(outdir, f"mesh_level{rec.level:03d}.vtk"),
                    mesh)
            extra = {}
            if result.meshes:
                extra["contact_refinement_ratio"] = \
                    contact_refinement_ratio(result.meshes[-1])
            report = _write_common(outdir, cfg, result, extra)
        if result.aborted:
            write_json(os.path.join(outdir, "error.json"),
                       {"error": result.abort_reason,
                        "kind": "solver_nonconvergence"})
            return 2
        return 0
    except (ConfigError, SolverError, ValueError) as err:
        write_json(os.path.join(outdir, "error.json"),
                   {"error": str(err), "kind": type(err).__name__})
        return 1


def run_estimate(args) -> int:
    cfg = _resolve_config(args)
    outdir = cfg.out_dir
    os.makedirs(outdir, exist_ok=True)
    try:
        mesh, u, lam_values, _ = load_solution(args.solution)
        data = cfg.problem_data()
        table = build_contact_table(mesh, data)
        if lam_values is None:
            lam_values = np.zeros((table.n_points, 2))
        lam = FrictionMultiplier(table, lam_values)
        breakdown = compute_estimator(u, lam, data, cfg.variant())
        osc = compute_oscillations(data, mesh)
        eta_T = breakdown.eta_elements
        rows = [(t, eta_T[t], *breakdown.per_element_terms[t])
                for t in range(mesh.n_triangles)]
        write_csv(os.path.join(outdir, "indicators.csv"),
                  ("triangle", "eta_T", "sq_volume_load", "sq_stress_jump",
                   "sq_displacement_jump", "sq_friction_traction",
                   "sq_traction_mismatch", "sq_compliance_mismatch"), rows)
        write_mesh_vtk(os.path.join(outdir, "indicators.vtk"), mesh,
                       {"indicator": eta_T})
        write_json(os.path.join(outdir, "estimate.json"), {
            "eta_h": breakdown.eta_h,
            "eta_parts": list(breakdown.eta_parts),
            "oscillations": osc.to_dict(),
        })
        return 0
    except (ConfigError, ValueError, OSError) as err:
        write_json(os.path.join(outdir, "error.json"),
                   {"error": str(err), "kind": type(err).__name__})
        return 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dgcontact",
        description="DG solver for 2D frictional contact with normal "
                    "compliance: uniform and adaptive refinement studies")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("uniform", "uniform-mesh convergence study"),
            ("adaptive", "adaptive refinement loop"),
            ("estimate", "one-shot estimator on a saved solution")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="path to a JSON configuration")
        p.add_argument("--preset", help="built-in preset "
                                        "(example1 or example2)")
        p.add_argument("--method", choices=("sipg", "nipg", "bassi",
                                            "brezzi", "ldg"))
        p.add_argument("--theta", type=float,
                       help="bulk marking fraction in (0, 1]")
        p.add_argument("--levels", type=int, help="level cap")
        p.add_argument("--out", help="output directory")
        if name == "estimate":
            p.add_argument("--solution", required=True,
                           help="solution archive (.npz) produced by a run")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "estimate":
            return run_estimate(args)
        cfg = _resolve_config(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
