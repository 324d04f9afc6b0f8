import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgcontact.mesh import (BoundaryLabel, MeshError, build_rectangle_mesh,
                            dorfler_mark, locate_in_rectangle_mesh,
                            refine_nvb, side_labeler)

from conftest import clamped_square_mesh, unit_square_mesh


def brute_force_dorfler(indicators, theta):
    """Exhaustive minimal bulk set: smallest cardinality, then largest
    squared mass, then lexicographic order."""
    sq = np.asarray(indicators, dtype=float) ** 2
    total = sq.sum()
    best = None
    n = len(sq)
    for k in range(1, n + 1):
        candidates = []
        for combo in itertools.combinations(range(n), k):
            mass = sq[list(combo)].sum()
            if mass >= theta * total - 1e-12 * total:
                candidates.append((-mass, combo))
        if candidates:
            best = sorted(candidates)[0][1]
            break
    return np.array(best)


class TestBuildRectangle:
    def test_minimal_mesh_counts(self, two_triangle_mesh):
        m = two_triangle_mesh
        assert m.n_triangles == 2
        assert m.boundary_edge_mask.sum() == 4
        assert len(m.interior_edges) == 1
        m.check_conformity()

    def test_counts_scale_quadratically(self):
        m = unit_square_mesh(4)
        assert m.n_triangles == 2 * 16
        assert m.n_vertices == 25

    def test_example1_layout(self):
        lo, hi = (0.0, 0.05), (1.0, 1.05)
        m = build_rectangle_mesh(
            lo, hi, 4, side_labeler("traction", "dirichlet", "contact",
                                    "traction", lo, hi))
        for e in m.edge_ids(BoundaryLabel.DIRICHLET):
            assert np.isclose(m.edge_midpoints[e][0], 1.0)
        for e in m.edge_ids(BoundaryLabel.CONTACT):
            assert np.isclose(m.edge_midpoints[e][1], 0.05)
        for e in m.edge_ids(BoundaryLabel.TRACTION):
            x, y = m.edge_midpoints[e]
            assert np.isclose(x, 0.0) or np.isclose(y, 1.05)

    def test_example2_layout(self):
        m = unit_square_mesh(4, "traction", "traction", "contact",
                             "dirichlet")
        for e in m.edge_ids(BoundaryLabel.DIRICHLET):
            assert np.isclose(m.edge_midpoints[e][1], 1.0)
        for e in m.edge_ids(BoundaryLabel.CONTACT):
            assert np.isclose(m.edge_midpoints[e][1], 0.0)

    def test_degenerate_rectangle_rejected(self):
        lab = side_labeler("dirichlet", "dirichlet", "dirichlet",
                           "dirichlet", (0, 0), (1, 1))
        with pytest.raises(MeshError):
            build_rectangle_mesh((0, 0), (0, 1), 1, lab)
        with pytest.raises(MeshError):
            build_rectangle_mesh((0, 0), (1, 1), 0, lab)

    def test_unlabeled_edge_rejected(self):
        with pytest.raises(MeshError, match="unlabeled|no label"):
            build_rectangle_mesh((0, 0), (1, 1), 1, lambda x, y: None)

    def test_dirichlet_required(self):
        lab = side_labeler("traction", "traction", "contact", "traction",
                           (0, 0), (1, 1))
        with pytest.raises(MeshError, match="Dirichlet"):
            build_rectangle_mesh((0, 0), (1, 1), 1, lab)

    def test_structured_point_location(self):
        m = unit_square_mesh(4)
        rng = np.random.default_rng(7)
        pts = rng.random((200, 2))
        ids = locate_in_rectangle_mesh(m, pts)
        for p, t in zip(pts, ids):
            tri = m.vertices[m.triangles[t]]
            T = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
            loc = np.linalg.solve(T, p - tri[0])
            assert loc[0] >= -1e-12 and loc[1] >= -1e-12
            assert loc.sum() <= 1 + 1e-12


class TestRefineNVB:
    def test_mark_both_bisects_to_four(self, two_triangle_mesh):
        fine = refine_nvb(two_triangle_mesh, [0, 1])
        assert fine.n_triangles == 4
        fine.check_conformity()

    def test_empty_marking_is_identity(self, two_triangle_mesh):
        assert refine_nvb(two_triangle_mesh, []) is two_triangle_mesh

    def test_invalid_marks_rejected(self, two_triangle_mesh):
        with pytest.raises(MeshError):
            refine_nvb(two_triangle_mesh, [5])

    def test_children_cover_parents(self):
        mesh = unit_square_mesh(2)
        fine = refine_nvb(mesh, np.arange(mesh.n_triangles))
        sums = np.zeros(mesh.n_triangles)
        np.add.at(sums, fine.parent, fine.areas)
        assert np.allclose(sums, mesh.areas, rtol=1e-12)
        # geometric nestedness: child centroids inside the parent
        cent = fine.vertices[fine.triangles].mean(axis=1)
        for t in range(fine.n_triangles):
            p = mesh.triangle_points(fine.parent[t])
            T = np.column_stack([p[1] - p[0], p[2] - p[0]])
            loc = np.linalg.solve(T, cent[t] - p[0])
            assert loc.min() > -1e-12 and loc.sum() < 1 + 1e-12

    def test_single_mark_stays_conforming(self):
        mesh = unit_square_mesh(2)
        fine = refine_nvb(mesh, [3])
        fine.check_conformity()
        assert fine.n_triangles > mesh.n_triangles
        children = np.nonzero(fine.parent == 3)[0]
        assert len(children) >= 2

    def test_label_inheritance(self):
        mesh = unit_square_mesh(2, "traction", "dirichlet", "contact",
                                "traction")
        fine = refine_nvb(mesh, np.arange(mesh.n_triangles))
        fine = refine_nvb(fine, np.arange(fine.n_triangles))
        for label, side in ((BoundaryLabel.CONTACT, ("y", 0.0)),
                            (BoundaryLabel.DIRICHLET, ("x", 1.0))):
            ids = fine.edge_ids(label)
            assert len(ids) > 0
            coord = 0 if side[0] == "x" else 1
            assert np.allclose(fine.edge_midpoints[ids][:, coord], side[1])
        total = fine.boundary_edge_mask.sum()
        labeled = sum(len(fine.edge_ids(lab)) for lab in BoundaryLabel)
        assert total == labeled

    def test_min_angle_stable_over_twenty_generations(self):
        mesh = clamped_square_mesh(1)
        once = refine_nvb(mesh, np.arange(mesh.n_triangles))
        bound = once.min_angle()
        current = mesh
        angles = []
        for _ in range(20):
            current = refine_nvb(current, np.arange(current.n_triangles))
            angles.append(current.min_angle())
        assert min(angles) >= bound - 1e-12

    def test_generations_increase(self):
        mesh = unit_square_mesh(1)
        fine = refine_nvb(mesh, [0])
        assert fine.generation.max() >= 1
        assert fine.generation.min() >= 0


class TestDorflerMark:
    def test_documented_example(self):
        assert list(dorfler_mark([4.0, 3.0, 2.0, 1.0], 0.3)) == [0]

    def test_theta_one_marks_all_positive(self):
        marked = dorfler_mark([4.0, 3.0, 2.0, 1.0], 1.0)
        assert list(marked) == [0, 1, 2, 3]
        marked = dorfler_mark([4.0, 0.0, 2.0], 1.0)
        assert 1 not in set(marked.tolist())

    def test_single_positive_indicator(self):
        for theta in (0.01, 0.5, 1.0):
            assert list(dorfler_mark([0.0, 0.0, 7.0, 0.0], theta)) == [2]

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError, match="nothing to refine"):
            dorfler_mark([0.0, 0.0], 0.5)

    def test_invalid_inputs_rejected(self):
        with pytest.raises(ValueError):
            dorfler_mark([1.0, -2.0], 0.5)
        with pytest.raises(ValueError):
            dorfler_mark([1.0, np.inf], 0.5)
        with pytest.raises(ValueError):
            dorfler_mark([1.0], 0.0)

    def test_matches_brute_force_small(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            n = rng.integers(1, 13)
            eta = rng.random(n) * 10
            theta = rng.uniform(0.05, 1.0)
            got = dorfler_mark(eta, theta)
            want = brute_force_dorfler(eta, theta)
            assert len(got) == len(want)
            sq = eta ** 2
            assert sq[got].sum() >= theta * sq.sum() - 1e-12 * sq.sum()
            assert np.array_equal(got, np.sort(want))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.01, 100.0), min_size=1, max_size=10),
           st.floats(0.05, 1.0))
    def test_bulk_criterion_property(self, eta, theta):
        eta = np.asarray(eta)
        marked = dorfler_mark(eta, theta)
        sq = eta ** 2
        assert sq[marked].sum() >= theta * sq.sum() - 1e-9 * sq.sum()
        # minimality: dropping the smallest marked indicator breaks the bulk
        if len(marked) > 1:
            reduced = sq[marked].sum() - sq[marked].min()
            assert reduced < theta * sq.sum() + 1e-9 * sq.sum()
