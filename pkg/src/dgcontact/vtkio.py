"""File export: legacy ASCII VTK, RFC-4180 CSV, MatrixMarket, JSON and
solution archives.  All writers go through a temp file in the target
directory plus an atomic rename, so interrupted runs never leave truncated
artifacts.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile

import numpy as np
import scipy.io

from .dgspace import DGFunction
from .mesh import Mesh


def _atomic_write(path, writer, mode="w"):
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-",
                               suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_mesh_vtk(path, mesh: Mesh, cell_data: dict | None = None):
    """Legacy ASCII VTK with shared points and per-cell scalar arrays."""
    def emit(fh):
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("triangulation\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_vertices} double\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.16g} {y:.16g} 0\n")
        nt = mesh.n_triangles
        fh.write(f"CELLS {nt} {4 * nt}\n")
        for tri in mesh.triangles:
            fh.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n")
        fh.write(f"CELL_TYPES {nt}\n")
        fh.write("\n".join(["5"] * nt) + "\n")
        data = {"generation": mesh.generation.astype(float)}
        data.update(cell_data or {})
        fh.write(f"CELL_DATA {nt}\n")
        for name, values in data.items():
            values = np.asarray(values, dtype=float)
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(f"{v:.16g}" for v in values) + "\n")
    _atomic_write(path, emit)


def write_dg_vtk(path, u: DGFunction, cell_data: dict | None = None):
    """DG field export with points replicated per triangle, preserving the
    inter-element discontinuities, plus optional per-cell arrays."""
    mesh = u.mesh
    nt = mesh.n_triangles

    def emit(fh):
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("dg displacement\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {3 * nt} double\n")
        pts = mesh.vertices[mesh.triangles].reshape(-1, 2)
        for x, y in pts:
            fh.write(f"{x:.16g} {y:.16g} 0\n")
        fh.write(f"CELLS {nt} {4 * nt}\n")
        for t in range(nt):
            fh.write(f"3 {3 * t} {3 * t + 1} {3 * t + 2}\n")
        fh.write(f"CELL_TYPES {nt}\n")
        fh.write("\n".join(["5"] * nt) + "\n")
        fh.write(f"POINT_DATA {3 * nt}\n")
        fh.write("VECTORS displacement double\n")
        for vx, vy in u.coeffs.reshape(-1, 2):
            fh.write(f"{vx:.16g} {vy:.16g} 0\n")
        if cell_data:
            fh.write(f"CELL_DATA {nt}\n")
            for name, values in cell_data.items():
                values = np.asarray(values, dtype=float)
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                fh.write("\n".join(f"{v:.16g}" for v in values) + "\n")
    _atomic_write(path, emit)


def write_csv(path, header, rows):
    def emit(fh):
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else v for v in row])
    _atomic_write(path, emit)


def write_json(path, payload):
    _atomic_write(path, lambda fh: json.dump(payload, fh, indent=2))


def write_matrix_market(path, matrix):
    def emit(fh):
        buf = io.BytesIO()
        scipy.io.mmwrite(buf, matrix)
        fh.write(buf.getvalue())
    _atomic_write(path, emit, mode="wb")


def write_coefficients_csv(path, u: DGFunction):
    rows = [(t, v, u.coeffs[t, v, 0], u.coeffs[t, v, 1])
            for t in range(u.mesh.n_triangles) for v in range(3)]
    write_csv(path, ("triangle", "vertex", "ux", "uy"), rows)


def save_solution(path, mesh: Mesh, u: DGFunction, lam=None,
                  config: dict | None = None):
    """Bundle mesh, displacement and multiplier into one npz archive."""
    labels = mesh.boundary_label_map()
    label_pairs = np.array([[a, b] for (a, b) in labels], dtype=np.int64) \
        .reshape(-1, 2)
    label_vals = np.array([int(v) for v in labels.values()], dtype=np.int64)
    payload = {
        "vertices": mesh.vertices,
        "triangles": mesh.triangles,
        "generation": mesh.generation,
        "label_pairs": label_pairs,
        "label_values": label_vals,
        "coeffs": u.coeffs,
        "config_json": np.array(json.dumps(config or {})),
    }
    if lam is not None:
        payload["multiplier"] = np.asarray(lam.values)
    def emit(fh):
        np.savez(fh, **payload)
    _atomic_write(path, emit, mode="wb")


def load_solution(path):
    """Inverse of save_solution; returns (mesh, u, multiplier_values, config)."""
    with np.load(path, allow_pickle=False) as blob:
        labels = {
            (int(a), int(b)): int(v)
            for (a, b), v in zip(blob["label_pairs"], blob["label_values"])}
        mesh = Mesh(blob["vertices"], blob["triangles"], labels,
                    generation=blob["generation"])
        u = DGFunction(mesh, blob["coeffs"])
        lam_values = blob["multiplier"] if "multiplier" in blob else None
        config = json.loads(str(blob["config_json"]))
    return mesh, u, lam_values, config
