import numpy as np
import pytest

from evafem.assembly import DiscreteEnergy
from evafem.mesh import (
    MeshError,
    P1Space,
    bisect_patch_geometry,
    build_mesh,
    l_shape_mesh,
    prolong,
    read_ascii_tri,
    refine_nvb,
    tensor_grid_mesh,
    uniform_refine,
    unit_square_mesh,
    write_ascii_tri,
)
from evafem.problems import get_problem

SQUARE_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
SQUARE_TRIS = np.array([[2, 0, 1], [0, 2, 3]])


def check_conforming(mesh, domain_area=None):
    """From-scratch conformity oracle, independent of the Mesh internals.

    Checks orientation, side incidence counts, total area, and (for
    bisection meshes) the absence of hanging nodes: no edge may have its
    exact midpoint among the mesh vertices unless that edge is split.
    """
    verts, tris = np.asarray(mesh.vertices), np.asarray(mesh.triangles)
    sides = {}
    directed = set()
    total_area = 0.0
    for t, (a, b, c) in enumerate(tris):
        pa, pb, pc = verts[a], verts[b], verts[c]
        area = 0.5 * np.linalg.det(np.array([pb - pa, pc - pa]))
        assert area > 0.0, f"triangle {t} not positively oriented"
        total_area += area
        for u, v in ((a, b), (b, c), (c, a)):
            assert (u, v) not in directed, f"directed side ({u},{v}) duplicated"
            directed.add((u, v))
            key = (min(u, v), max(u, v))
            sides[key] = sides.get(key, 0) + 1
    assert all(n in (1, 2) for n in sides.values())
    if domain_area is not None:
        assert abs(total_area - domain_area) < 1e-12 * max(domain_area, 1.0)
    # hanging nodes: a vertex sitting at an unsplit side midpoint
    coord_key = {(round(x, 12), round(y, 12)): i for i, (x, y) in enumerate(verts)}
    for (u, v) in sides:
        mid = 0.5 * (verts[u] + verts[v])
        hit = coord_key.get((round(mid[0], 12), round(mid[1], 12)))
        assert hit is None, f"hanging node {hit} on side ({u},{v})"


def side_lengths(tri_coords):
    return sorted(
        np.linalg.norm(tri_coords[(k + 1) % 3] - tri_coords[k]) for k in range(3)
    )


def check_right_isosceles(mesh):
    for tri in mesh.triangle_coords():
        a, b, c = side_lengths(tri)
        assert abs(a - b) < 1e-12 * c
        assert abs(c - a * np.sqrt(2.0)) < 1e-12 * c


class TestBuildMesh:
    def test_two_triangle_square(self):
        mesh = build_mesh(SQUARE_VERTS, SQUARE_TRIS)
        assert mesh.n_edges == 5
        assert len(mesh.interior_edge_ids()) == 1
        i, j = mesh.edges[mesh.interior_edge_ids()[0]]
        assert {i, j} == {0, 2}  # the diagonal
        assert P1Space(mesh).dim == 0

    def test_centroid_fan(self):
        verts = np.vstack([SQUARE_VERTS, [[0.5, 0.5]]])
        tris = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
        mesh = build_mesh(verts, tris)
        assert mesh.n_edges == 8
        assert len(mesh.interior_edge_ids()) == 4
        assert P1Space(mesh).dim == 1

    def test_same_side_sharing_rejected(self):
        with pytest.raises(MeshError, match="non-conforming"):
            build_mesh(SQUARE_VERTS, np.array([[0, 1, 2], [0, 1, 3]]))

    def test_degenerate_triangle_rejected(self):
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        with pytest.raises(MeshError, match="area"):
            build_mesh(verts, np.array([[0, 1, 2]]))

    def test_inverted_orientation_rejected(self):
        with pytest.raises(MeshError, match="area"):
            build_mesh(SQUARE_VERTS, np.array([[1, 0, 2]]))

    def test_three_triangles_on_one_edge_rejected(self):
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0], [2.0, 0.5]])
        tris = np.array([[0, 1, 2], [1, 0, 3], [1, 4, 2]])
        # force a third triangle onto edge (0, 1) via an extra sliver
        tris = np.vstack([tris, [[0, 1, 4]]])
        with pytest.raises(MeshError):
            build_mesh(verts, tris)

    def test_boundary_marker_validation(self):
        on_square_boundary = lambda x, y: (
            (x < 1e-12) | (x > 1 - 1e-12) | (y < 1e-12) | (y > 1 - 1e-12)
        )
        build_mesh(SQUARE_VERTS, SQUARE_TRIS, boundary_marker=on_square_boundary)
        with pytest.raises(MeshError, match="marker"):
            build_mesh(SQUARE_VERTS, SQUARE_TRIS, boundary_marker=lambda x, y: x < 0.5)


class TestRefine:
    def test_mark_diagonal_of_square(self):
        mesh = build_mesh(SQUARE_VERTS, SQUARE_TRIS)
        diag = mesh.interior_edge_ids()[0]
        fine, _ = refine_nvb(mesh, [diag])
        assert fine.n_triangles == 4
        assert fine.n_vertices == 5
        assert np.allclose(fine.vertices[4], [0.5, 0.5])
        check_conforming(fine, domain_area=1.0)

    def test_empty_marking_is_identity(self):
        mesh = build_mesh(SQUARE_VERTS, SQUARE_TRIS)
        same, p = refine_nvb(mesh, [])
        assert np.array_equal(same.triangles, mesh.triangles)
        assert np.array_equal(same.vertices, mesh.vertices)
        assert len(p.mid_parents) == 0

    def test_unknown_edge_rejected(self):
        mesh = build_mesh(SQUARE_VERTS, SQUARE_TRIS)
        with pytest.raises(ValueError, match="not present"):
            refine_nvb(mesh, [99])

    def test_l_shape_mark_all(self):
        mesh = l_shape_mesh()
        fine, _ = refine_nvb(mesh, np.arange(mesh.n_edges))
        check_conforming(fine, domain_area=3.0)
        # every input triangle was split
        assert fine.n_triangles >= 2 * mesh.n_triangles

    def test_marked_edges_are_bisected(self):
        mesh, _ = uniform_refine(l_shape_mesh())
        rng = np.random.default_rng(11)
        marked = rng.choice(mesh.n_edges, size=5, replace=False)
        fine, _ = refine_nvb(mesh, marked)
        fine_keys = {tuple(np.round(v, 12)) for v in fine.vertices}
        for eid in marked:
            a, b = mesh.edges[eid]
            mid = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
            assert tuple(np.round(mid, 12)) in fine_keys

    def test_random_markings_stay_conforming(self):
        # property: conformity for arbitrary marked sets
        rng = np.random.default_rng(0)
        for trial in range(100):
            mesh = unit_square_mesh() if trial % 2 else l_shape_mesh()
            area = 1.0 if trial % 2 else 3.0
            for _ in range(rng.integers(1, 4)):
                k = rng.integers(0, mesh.n_edges) + 1
                marked = rng.choice(mesh.n_edges, size=min(k, mesh.n_edges), replace=False)
                mesh, _ = refine_nvb(mesh, marked)
                if mesh.n_triangles > 10_000:
                    break
            check_conforming(mesh, domain_area=area)

    def test_right_isosceles_preserved_at_all_levels(self):
        rng = np.random.default_rng(5)
        for mesh in (unit_square_mesh(), l_shape_mesh()):
            check_right_isosceles(mesh)
            for _ in range(6):
                k = max(1, mesh.n_edges // 4)
                marked = rng.choice(mesh.n_edges, size=k, replace=False)
                mesh, _ = refine_nvb(mesh, marked)
                check_right_isosceles(mesh)

    def test_nestedness(self):
        mesh, _ = uniform_refine(l_shape_mesh())
        rng = np.random.default_rng(2)
        coarse = mesh
        marked = rng.choice(coarse.n_edges, size=8, replace=False)
        fine, _ = refine_nvb(coarse, marked)
        # each fine triangle lies inside exactly one coarse triangle
        cc = coarse.triangle_coords()
        for tri in fine.triangle_coords():
            centroid = tri.mean(axis=0)
            inside = []
            for t, pc in enumerate(cc):
                lam = np.linalg.solve(
                    np.array([pc[1] - pc[0], pc[2] - pc[0]]).T, centroid - pc[0]
                )
                if lam[0] >= -1e-12 and lam[1] >= -1e-12 and lam.sum() <= 1 + 1e-12:
                    inside.append(t)
            assert len(inside) == 1
            pc = cc[inside[0]]
            basis = np.array([pc[1] - pc[0], pc[2] - pc[0]]).T
            for v in tri:
                lam = np.linalg.solve(basis, v - pc[0])
                assert lam[0] >= -1e-12 and lam[1] >= -1e-12 and lam.sum() <= 1 + 1e-12


class TestProlongation:
    def test_zero_maps_to_zero(self):
        mesh, _ = uniform_refine(unit_square_mesh())
        space = P1Space(mesh)
        fine, p = refine_nvb(mesh, np.arange(mesh.n_edges))
        out = prolong(np.zeros(space.dim), p, P1Space(fine))
        assert np.all(out == 0.0)

    def test_pointwise_equality_of_functions(self):
        # prolonged coefficients reproduce the coarse P1 function exactly:
        # surviving vertices keep values, midpoints average their parents
        mesh = unit_square_mesh()
        for _ in range(3):
            mesh, _ = uniform_refine(mesh)
        space = P1Space(mesh)
        rng = np.random.default_rng(8)
        coarse = rng.normal(size=space.dim)
        fine, p = refine_nvb(mesh, np.arange(0, mesh.n_edges, 2))
        fspace = P1Space(fine)
        out = prolong(coarse, p, fspace)
        full_c = space.to_full(coarse)
        full_f = fspace.to_full(out)
        # old vertices keep their value
        assert np.allclose(full_f[: mesh.n_vertices], full_c, atol=0)
        # midpoints interpolate linearly along the parent edge
        for k, (a, b) in enumerate(p.mid_parents):
            assert full_f[mesh.n_vertices + k] == 0.5 * (full_c[a] + full_c[b])

    def test_affine_function_reproduced_away_from_boundary(self):
        g = lambda x, y: 2.0 * x - 0.5 * y
        mesh = unit_square_mesh()
        for _ in range(3):
            mesh, _ = uniform_refine(mesh)
        space = P1Space(mesh)
        coarse = np.array([g(*mesh.vertices[v]) for v in space.dof_vertices])
        fine, p = refine_nvb(mesh, np.arange(mesh.n_edges))
        fspace = P1Space(fine)
        out = prolong(coarse, p, fspace)
        full = fspace.to_full(out)
        interior = ~mesh.boundary_vertices
        for k, (a, b) in enumerate(p.mid_parents):
            if interior[a] and interior[b]:
                v = fine.vertices[mesh.n_vertices + k]
                assert abs(full[mesh.n_vertices + k] - g(*v)) < 1e-14

    def test_linearity(self):
        mesh, _ = uniform_refine(unit_square_mesh())
        mesh, _ = uniform_refine(mesh)
        space = P1Space(mesh)
        fine, p = refine_nvb(mesh, np.arange(0, mesh.n_edges, 3))
        fspace = P1Space(fine)
        rng = np.random.default_rng(3)
        u, v = rng.normal(size=space.dim), rng.normal(size=space.dim)
        a, b = 1.7, -2.3
        lhs = prolong(a * u + b * v, p, fspace)
        rhs = a * prolong(u, p, fspace) + b * prolong(v, p, fspace)
        assert np.max(np.abs(lhs - rhs)) < 1e-14 * max(1.0, np.max(np.abs(rhs)))

    def test_dimension_mismatch_rejected(self):
        mesh, _ = uniform_refine(unit_square_mesh())
        fine, p = refine_nvb(mesh, np.arange(mesh.n_edges))
        with pytest.raises(ValueError):
            prolong(np.zeros(7), p, P1Space(fine))

    def test_energy_preserved_under_prolongation(self):
        problem = get_problem("laplace-lshape")
        mesh = problem.initial_mesh()
        for _ in range(2):
            mesh, _ = uniform_refine(mesh)
        space = P1Space(mesh)
        rng = np.random.default_rng(12)
        u = rng.normal(size=space.dim)
        e_coarse = DiscreteEnergy(space, problem).value(u)
        fine, p = refine_nvb(mesh, np.arange(0, mesh.n_edges, 2))
        fspace = P1Space(fine)
        e_fine = DiscreteEnergy(fspace, problem).value(prolong(u, p, fspace))
        assert abs(e_fine - e_coarse) < 1e-12 * max(abs(e_coarse), 1.0)


class TestPatchGeometry:
    def test_symmetric_patch(self):
        verts = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.5], [-1.0, 0.5]])
        tris = np.array([[1, 0, 2], [0, 1, 3]])
        mesh = build_mesh(verts, tris)
        eid = mesh.interior_edge_ids()[0]
        patch = bisect_patch_geometry(mesh, eid)
        assert np.allclose(patch.midpoint, [0.0, 0.5])
        areas = [
            abs(0.5 * np.linalg.det(np.array([t[1] - t[0], t[2] - t[0]])))
            for t in patch.sub_triangles
        ]
        total = sum(
            abs(0.5 * np.linalg.det(np.array([c[1] - c[0], c[2] - c[0]])))
            for c in mesh.triangle_coords()
        )
        assert np.allclose(areas, total / 4)  # fully symmetric patch
        assert abs(sum(areas) - total) < 1e-14

    def test_sharp_children_equal_area(self):
        mesh, _ = uniform_refine(unit_square_mesh())
        for eid in mesh.interior_edge_ids():
            patch = bisect_patch_geometry(mesh, eid)
            a = [
                abs(0.5 * np.linalg.det(np.array([t[1] - t[0], t[2] - t[0]])))
                for t in patch.sub_triangles
            ]
            assert abs(a[0] - a[1]) < 1e-14
            assert abs(a[2] - a[3]) < 1e-14

    def test_boundary_edge_rejected(self):
        mesh = build_mesh(SQUARE_VERTS, SQUARE_TRIS)
        boundary = np.nonzero(mesh.boundary_edges)[0]
        with pytest.raises(ValueError, match="interior"):
            bisect_patch_geometry(mesh, boundary[0])


class TestDomains:
    def test_unit_square_is_two_right_isosceles(self):
        mesh = unit_square_mesh()
        assert mesh.n_triangles == 2
        check_right_isosceles(mesh)
        # common refinement edge is the main diagonal
        for te in mesh.tri_edges[:, 0]:
            i, j = mesh.edges[te]
            assert {tuple(mesh.vertices[i]), tuple(mesh.vertices[j])} == {
                (0.0, 0.0),
                (1.0, 1.0),
            }

    def test_l_shape_fan(self):
        mesh = l_shape_mesh()
        assert mesh.n_triangles == 6
        check_conforming(mesh, domain_area=3.0)
        check_right_isosceles(mesh)
        # hypotenuse (refinement edge) always touches the origin
        for te in mesh.tri_edges[:, 0]:
            i, j = mesh.edges[te]
            assert 0 in (i, j)

    def test_tensor_grid_alignment(self):
        xs = np.array([0.0, 0.1, 0.2, 0.3, 0.4, 0.7, 0.8, 1.0])
        mesh = tensor_grid_mesh(xs)
        check_conforming(mesh, domain_area=1.0)
        assert mesh.n_triangles == 2 * 7 * 7
        # every element sits inside one kappa region: no centroid on a grid line
        cent = mesh.triangle_coords().mean(axis=1)
        for line in xs[1:-1]:
            assert np.min(np.abs(cent[:, 0] - line)) > 1e-9
            assert np.min(np.abs(cent[:, 1] - line)) > 1e-9


class TestAsciiTri:
    def test_round_trip(self, tmp_path):
        mesh, _ = uniform_refine(l_shape_mesh())
        path = tmp_path / "mesh.tri"
        write_ascii_tri(mesh, path)
        text = path.read_text().splitlines()
        assert text[0] == "ascii-tri v1"
        assert int(text[1]) == mesh.n_vertices
        back = read_ascii_tri(path)
        assert np.array_equal(back.triangles, mesh.triangles)
        assert np.array_equal(back.vertices, mesh.vertices)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.tri"
        path.write_text("not-a-mesh\n")
        with pytest.raises(MeshError, match="header"):
            read_ascii_tri(path)
