"""Conforming triangulations with boundary labels, newest-vertex bisection and
bulk (Doerfler) marking.

Triangles are stored with a fixed vertex convention: local vertex 0 is the
"peak" (newest vertex) and the refinement edge is the one opposite to it,
i.e. (v1, v2).  All triangles are counter-clockwise.  A mesh is immutable
after construction; refinement returns a new mesh that keeps a reference to
its parent mesh, so ancestry chains can be walked for nested evaluation.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np


class MeshError(ValueError):
    pass


class BoundaryLabel(IntEnum):
    DIRICHLET = 0
    TRACTION = 1
    CONTACT = 2


_LABEL_NAMES = {
    "dirichlet": BoundaryLabel.DIRICHLET,
    "traction": BoundaryLabel.TRACTION,
    "contact": BoundaryLabel.CONTACT,
}

INTERIOR = -1


def as_label(value) -> BoundaryLabel:
    if isinstance(value, BoundaryLabel):
        return value
    if isinstance(value, str):
        try:
            return _LABEL_NAMES[value.lower()]
        except KeyError:
            raise MeshError(f"unknown boundary label {value!r}") from None
    try:
        return BoundaryLabel(int(value))
    except (TypeError, ValueError):
        raise MeshError(f"cannot interpret {value!r} as a boundary label") \
            from None


class Mesh:
    """Conforming triangulation of a polygonal domain.

    Parameters
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, CCW, local vertex 0 = newest vertex
    boundary_labels : dict mapping sorted vertex pairs of boundary edges to
        BoundaryLabel
    generation, parent : per-triangle refinement level and parent index in
        ``parent_mesh`` (-1 for root triangles)
    """

    def __init__(self, vertices, triangles, boundary_labels, generation=None,
                 parent=None, parent_mesh=None, rect_info=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (nv, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be an (nt, 3) array")
        nt = len(self.triangles)
        self.generation = (np.zeros(nt, dtype=np.int64) if generation is None
                           else np.asarray(generation, dtype=np.int64))
        self.parent = (np.full(nt, -1, dtype=np.int64) if parent is None
                       else np.asarray(parent, dtype=np.int64))
        self.parent_mesh = parent_mesh
        self.rect_info = rect_info
        self._build_topology(dict(boundary_labels))
        for arr in (self.vertices, self.triangles, self.generation, self.parent,
                    self.edges, self.edge_labels, self.tri_edges, self.edge_tris):
            arr.flags.writeable = False

    # -- construction -----------------------------------------------------

    def _build_topology(self, label_map):
        tris = self.triangles
        nt = len(tris)
        p = self.vertices[tris]  # (nt, 3, 2)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        self.areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(self.areas <= 0.0):
            bad = int(np.argmin(self.areas))
            raise MeshError(f"triangle {bad} is degenerate or not CCW")

        # local edge i is opposite local vertex i
        raw = np.stack([tris[:, [1, 2]], tris[:, [2, 0]], tris[:, [0, 1]]],
                       axis=1).reshape(-1, 2)
        key = np.sort(raw, axis=1)
        self.edges, inverse = np.unique(key, axis=0, return_inverse=True)
        ne = len(self.edges)
        self.tri_edges = inverse.reshape(nt, 3)

        self.edge_tris = np.full((ne, 2), -1, dtype=np.int64)
        counts = np.zeros(ne, dtype=np.int64)
        order = np.argsort(inverse, kind="stable")
        for flat in order:
            e = inverse[flat]
            t = flat // 3
            if counts[e] >= 2:
                raise MeshError(f"edge {e} has more than two incident triangles")
            self.edge_tris[e, counts[e]] = t
            counts[e] += 1
        if np.any(counts == 0):
            raise MeshError("internal edge bookkeeping failure")

        self.boundary_edge_mask = counts == 1
        ev = self.vertices[self.edges]
        tangent = ev[:, 1] - ev[:, 0]
        self.edge_lengths = np.linalg.norm(tangent, axis=1)
        if np.any(self.edge_lengths <= 0.0):
            raise MeshError("zero-length edge")
        self.edge_midpoints = 0.5 * (ev[:, 0] + ev[:, 1])

        # unit normal pointing out of edge_tris[:, 0]
        n = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1)
        n /= self.edge_lengths[:, None]
        first_centroid = p[self.edge_tris[:, 0]].mean(axis=1)
        flip = np.einsum("ij,ij->i", n, first_centroid - self.edge_midpoints) > 0
        n[flip] *= -1.0
        self.edge_normals = n

        self.edge_labels = np.full(ne, INTERIOR, dtype=np.int8)
        for e in np.nonzero(self.boundary_edge_mask)[0]:
            pair = (int(self.edges[e, 0]), int(self.edges[e, 1]))
            try:
                self.edge_labels[e] = int(as_label(label_map[pair]))
            except KeyError:
                raise MeshError(
                    f"boundary edge {pair} at {self.edge_midpoints[e]} "
                    "has no label") from None
        if not np.any(self.edge_labels == BoundaryLabel.DIRICHLET):
            raise MeshError("Dirichlet boundary part must be nonempty")

        edge_lens = self.edge_lengths[self.tri_edges]
        self.h_tri = edge_lens.max(axis=1)

    # -- derived sets ------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    def edge_ids(self, label) -> np.ndarray:
        """Boundary edge ids with the given label."""
        return np.nonzero(self.edge_labels == int(as_label(label)))[0]

    @property
    def interior_edges(self):
        return np.nonzero(self.edge_labels == INTERIOR)[0]

    @property
    def flux_edges(self):
        """Interior plus Dirichlet edges (the set carrying DG jump terms)."""
        mask = (self.edge_labels == INTERIOR) | \
               (self.edge_labels == BoundaryLabel.DIRICHLET)
        return np.nonzero(mask)[0]

    def boundary_label_map(self):
        out = {}
        for e in np.nonzero(self.boundary_edge_mask)[0]:
            out[(int(self.edges[e, 0]), int(self.edges[e, 1]))] = \
                BoundaryLabel(int(self.edge_labels[e]))
        return out

    def vertices_on(self, label) -> np.ndarray:
        """Vertex ids lying on the closure of the given boundary part."""
        ids = self.edge_ids(label)
        return np.unique(self.edges[ids])

    def triangle_points(self, t):
        return self.vertices[self.triangles[t]]

    def min_angle(self) -> float:
        p = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosv = np.einsum("ij,ij->i", a, b) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.arccos(np.clip(cosv, -1.0, 1.0)))
        return float(np.min(angles))

    def check_conformity(self):
        """Exhaustive invariant scan; raises MeshError on violation."""
        if np.any(self.areas <= 0):
            raise MeshError("non-positive triangle area")
        counts = (self.edge_tris >= 0).sum(axis=1)
        if np.any((counts < 1) | (counts > 2)):
            raise MeshError("edge incidence out of range")
        if np.any(self.boundary_edge_mask != (counts == 1)):
            raise MeshError("boundary mask inconsistent")
        if np.any(self.edge_labels[self.boundary_edge_mask] < 0):
            raise MeshError("unlabeled boundary edge")
        if np.any(self.edge_labels[~self.boundary_edge_mask] != INTERIOR):
            raise MeshError("interior edge carries a boundary label")
        # no hanging nodes: a vertex inside another triangle's open edge
        for e in range(self.n_edges):
            a, b = self.vertices[self.edges[e]]
            ab = b - a
            L2 = ab @ ab
            d = self.vertices - a
            t = (d @ ab) / L2
            off = d - t[:, None] * ab
            on_open = (np.einsum("ij,ij->i", off, off) < 1e-24 * L2) & \
                      (t > 1e-12) & (t < 1 - 1e-12)
            if np.any(on_open):
                raise MeshError(f"hanging node on edge {e}")


def _rect_label_map(vertices, edges, boundary_ids, labeler):
    out = {}
    for e in boundary_ids:
        a, b = edges[e]
        mid = 0.5 * (vertices[a] + vertices[b])
        lab = labeler(mid[0], mid[1])
        if lab is None:
            raise MeshError(f"labeler left boundary edge at {mid} unlabeled")
        out[(int(a), int(b))] = as_label(lab)
    return out


def side_labeler(left, right, bottom, top, corner_lo, corner_hi):
    """Labeler assigning one label per rectangle side, matched by midpoint."""
    lox, loy = corner_lo
    hix, hiy = corner_hi
    tol = 1e-12 * max(hix - lox, hiy - loy)

    def labeler(x, y):
        if abs(x - lox) < tol:
            return left
        if abs(x - hix) < tol:
            return right
        if abs(y - loy) < tol:
            return bottom
        if abs(y - hiy) < tol:
            return top
        return None

    return labeler


def build_rectangle_mesh(corner_lo, corner_hi, n, labeler) -> Mesh:
    """Criss-cross triangulation of a rectangle with 2*n^2 triangles.

    Each grid cell is split by its lower-left to upper-right diagonal (fixed
    so runs are reproducible).  The newest vertex of every initial triangle
    is the one opposite its longest edge, which for these cells is always
    the off-diagonal corner.
    """
    lox, loy = corner_lo
    hix, hiy = corner_hi
    if not (hix > lox and hiy > loy):
        raise MeshError("degenerate rectangle")
    n = int(n)
    if n < 1:
        raise MeshError("need at least one subdivision per axis")

    xs = np.linspace(lox, hix, n + 1)
    ys = np.linspace(loy, hiy, n + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.stack([xx.ravel(), yy.ravel()], axis=1)

    def vid(i, j):
        return i * (n + 1) + j

    tris = []
    for i in range(n):
        for j in range(n):
            a = vid(i, j)
            b = vid(i + 1, j)
            c = vid(i + 1, j + 1)
            d = vid(i, j + 1)
            # diagonal a-c; peak = vertex opposite the diagonal
            tris.append((b, c, a))
            tris.append((d, a, c))
    triangles = np.array(tris, dtype=np.int64)

    raw = np.stack([triangles[:, [1, 2]], triangles[:, [2, 0]],
                    triangles[:, [0, 1]]], axis=1).reshape(-1, 2)
    key = np.sort(raw, axis=1)
    edges, counts = np.unique(key, axis=0, return_counts=True)
    boundary_ids = np.nonzero(counts == 1)[0]
    labels = _rect_label_map(vertices, edges, boundary_ids, labeler)

    return Mesh(vertices, triangles, labels,
                rect_info=((lox, loy), (hix, hiy), n))


def locate_in_rectangle_mesh(mesh: Mesh, points) -> np.ndarray:
    """Triangle ids containing the given points, for structured meshes."""
    if mesh.rect_info is None:
        raise MeshError("mesh was not built by build_rectangle_mesh")
    (lox, loy), (hix, hiy), n = mesh.rect_info
    pts = np.atleast_2d(points)
    fx = (pts[:, 0] - lox) / (hix - lox) * n
    fy = (pts[:, 1] - loy) / (hiy - loy) * n
    i = np.clip(np.floor(fx).astype(np.int64), 0, n - 1)
    j = np.clip(np.floor(fy).astype(np.int64), 0, n - 1)
    # lower triangle of cell (i, j) lies below the cell diagonal
    lower = (fx - i) >= (fy - j)
    return 2 * (i * n + j) + np.where(lower, 0, 1)


def dorfler_mark(indicators, theta) -> np.ndarray:
    """Smallest set of triangles carrying a theta fraction of the squared
    indicator total; ties broken by lower triangle index.
    """
    eta = np.asarray(indicators, dtype=float)
    if eta.ndim != 1:
        raise ValueError("indicators must be one-dimensional")
    if not np.all(np.isfinite(eta)) or np.any(eta < 0):
        raise ValueError("indicators must be finite and nonnegative")
    if not (0.0 < theta <= 1.0):
        raise ValueError("theta must lie in (0, 1]")
    sq = eta ** 2
    total = sq.sum()
    if total <= 0.0:
        raise ValueError("all indicators are zero: nothing to refine")
    order = np.lexsort((np.arange(len(sq)), -sq))
    csum = np.cumsum(sq[order])
    k = int(np.searchsorted(csum, theta * total - 1e-14 * total) + 1)
    k = min(k, len(sq))
    return np.sort(order[:k])


def refine_nvb(mesh: Mesh, marked) -> Mesh:
    """Newest-vertex bisection of the marked triangles plus conforming closure.

    Every marked triangle is bisected at least once.  Boundary sub-edges
    inherit their parent edge's label verbatim.
    """
    marked = np.unique(np.asarray(list(marked), dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.n_triangles:
        raise MeshError("marked set contains invalid triangle indices")

    ref_edge = mesh.tri_edges[:, 0]
    edge_marked = np.zeros(mesh.n_edges, dtype=bool)
    edge_marked[ref_edge[marked]] = True
    while True:
        tri_touched = edge_marked[mesh.tri_edges].any(axis=1)
        need = tri_touched & ~edge_marked[ref_edge]
        if not np.any(need):
            break
        edge_marked[ref_edge[need]] = True

    split_ids = np.nonzero(edge_marked)[0]
    midpoint_of = {}
    new_vertices = [mesh.vertices]
    next_vid = mesh.n_vertices
    for e in split_ids:
        midpoint_of[int(e)] = next_vid
        next_vid += 1
    new_vertices.append(mesh.edge_midpoints[split_ids])
    vertices = np.vstack(new_vertices)

    old_labels = mesh.boundary_label_map()
    labels = dict(old_labels)
    for e in split_ids:
        a, b = (int(v) for v in mesh.edges[e])
        if mesh.boundary_edge_mask[e]:
            lab = labels.pop((a, b))
            m = midpoint_of[int(e)]
            labels[tuple(sorted((a, m)))] = lab
            labels[tuple(sorted((m, b)))] = lab

    tris, gens, parents = [], [], []

    def emit(tri, gen, par):
        tris.append(tri)
        gens.append(gen)
        parents.append(par)

    for t in range(mesh.n_triangles):
        v0, v1, v2 = (int(v) for v in mesh.triangles[t])
        e0, e1, e2 = (int(e) for e in mesh.tri_edges[t])
        g = int(mesh.generation[t])
        if not edge_marked[e0]:
            emit((v0, v1, v2), g, t)
            continue
        m0 = midpoint_of[e0]
        # first bisection: children (m0, v0, v1) and (m0, v2, v0)
        if edge_marked[e2]:
            m2 = midpoint_of[e2]
            emit((m2, m0, v0), g + 2, t)
            emit((m2, v1, m0), g + 2, t)
        else:
            emit((m0, v0, v1), g + 1, t)
        if edge_marked[e1]:
            m1 = midpoint_of[e1]
            emit((m1, m0, v2), g + 2, t)
            emit((m1, v0, m0), g + 2, t)
        else:
            emit((m0, v2, v0), g + 1, t)

    return Mesh(vertices, np.array(tris, dtype=np.int64), labels,
                generation=np.array(gens), parent=np.array(parents),
                parent_mesh=mesh)


def ancestor_triangles(fine: Mesh, coarse: Mesh) -> np.ndarray:
    """Map each fine triangle to the coarse triangle containing it.

    Works along a refine_nvb ancestry chain, or between two structured
    rectangle meshes with nested resolutions.  Raises MeshError otherwise.
    """
    if fine is coarse:
        return np.arange(fine.n_triangles)
    ids = np.arange(fine.n_triangles)
    m = fine
    while m.parent_mesh is not None:
        ids = m.parent[ids]
        m = m.parent_mesh
        if m is coarse:
            return ids
    if fine.rect_info is not None and coarse.rect_info is not None:
        lo_f, hi_f, nf = fine.rect_info
        lo_c, hi_c, nc = coarse.rect_info
        if np.allclose(lo_f, lo_c) and np.allclose(hi_f, hi_c) \
                and nf % nc == 0:
            centroids = fine.vertices[fine.triangles].mean(axis=1)
            return locate_in_rectangle_mesh(coarse, centroids)
    raise MeshError("meshes are not nested")
