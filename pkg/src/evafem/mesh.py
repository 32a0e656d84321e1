"""Conforming 2-D triangulations, P1 spaces, and newest-vertex bisection.

Triangles are stored as vertex triples ``(v0, v1, v2)`` with positive
orientation; the refinement edge of a triangle is ``(v0, v1)``, i.e. the
edge opposite its newest vertex ``v2``.  Edges are keyed by the sorted
vertex-index pair and enumerated lexicographically, so marking and
refinement are deterministic.
"""

from dataclasses import dataclass

import numpy as np


class MeshError(ValueError):
    """Raised for non-conforming or degenerate input triangulations."""


def _signed_areas(vertices, triangles):
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


class Mesh:
    """Immutable conforming triangulation with a derived edge table.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, refinement edge = columns (0, 1)
    edges : (ne, 2) int array of sorted vertex pairs, lexicographic order
    tri_edges : (nt, 3) int array of edge ids; column 0 is the refinement
        edge (v0, v1), column 1 is (v1, v2), column 2 is (v2, v0)
    edge_tris : (ne, 2) int array of incident triangles, -1 when boundary
    boundary_edges, boundary_vertices : bool arrays
    """

    def __init__(self, vertices, triangles):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must be an (nv, 2) array")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError("triangles must be an (nt, 3) array")
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshError("triangle references a vertex out of range")

        areas = _signed_areas(vertices, triangles)
        bad = np.nonzero(areas <= 0.0)[0]
        if bad.size:
            t = bad[0]
            raise MeshError(
                f"triangle {t} {tuple(triangles[t])} has non-positive area {areas[t]:g}"
                " (degenerate or inverted orientation)"
            )

        # Directed sides: in a consistently oriented conforming mesh every
        # directed edge occurs at most once.
        nt = len(triangles)
        local = [(0, 1), (1, 2), (2, 0)]
        directed = np.concatenate([triangles[:, [a, b]] for a, b in local])
        _, first, counts = np.unique(directed, axis=0, return_index=True, return_counts=True)
        if np.any(counts > 1):
            pair = directed[first[np.argmax(counts > 1)]]
            raise MeshError(
                f"non-conforming: directed edge ({pair[0]}, {pair[1]}) shared by"
                " two triangles on the same side"
            )

        undirected = np.sort(directed, axis=1)
        edges, inverse, counts = np.unique(
            undirected, axis=0, return_inverse=True, return_counts=True
        )
        if np.any(counts > 2):
            e = edges[np.argmax(counts > 2)]
            raise MeshError(f"non-conforming: edge ({e[0]}, {e[1]}) has >2 incident triangles")

        tri_edges = inverse.reshape(3, nt).T

        ne = len(edges)
        edge_tris = np.full((ne, 2), -1, dtype=np.int64)
        side = np.tile(np.arange(nt), 3)
        # fill slot 0 first, slot 1 for the second incidence
        order = np.argsort(inverse, kind="stable")
        sorted_edges = inverse[order]
        sorted_tris = side[order]
        starts = np.searchsorted(sorted_edges, np.arange(ne))
        edge_tris[:, 0] = sorted_tris[starts]
        second = counts == 2
        edge_tris[second, 1] = sorted_tris[starts[second] + 1]

        boundary_edges = counts == 1
        boundary_vertices = np.zeros(len(vertices), dtype=bool)
        boundary_vertices[edges[boundary_edges].ravel()] = True

        for arr in (vertices, triangles, edges, tri_edges, edge_tris,
                    boundary_edges, boundary_vertices, areas):
            arr.setflags(write=False)

        self.vertices = vertices
        self.triangles = triangles
        self.edges = edges
        self.tri_edges = tri_edges
        self.edge_tris = edge_tris
        self.boundary_edges = boundary_edges
        self.boundary_vertices = boundary_vertices
        self.areas = areas

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    def interior_edge_ids(self):
        return np.nonzero(~self.boundary_edges)[0]

    def triangle_coords(self):
        """Vertex coordinates per triangle, shape (nt, 3, 2)."""
        return self.vertices[self.triangles]

    def __repr__(self):
        return (
            f"Mesh({self.n_vertices} vertices, {self.n_triangles} triangles,"
            f" {self.n_edges} edges)"
        )


def build_mesh(vertices, triangles, boundary_marker=None) -> Mesh:
    """Construct a validated :class:`Mesh`.

    ``boundary_marker``, if given, is a vectorized predicate
    ``marker(x, y) -> bool`` that must hold exactly on the derived boundary
    vertices; a mismatch signals an unintended hole or a mis-specified
    triangulation.
    """
    mesh = Mesh(vertices, triangles)
    if boundary_marker is not None:
        x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
        expected = np.asarray(boundary_marker(x, y), dtype=bool)
        if not np.array_equal(expected, mesh.boundary_vertices):
            v = int(np.nonzero(expected != mesh.boundary_vertices)[0][0])
            raise MeshError(
                f"boundary marker disagrees with derived boundary at vertex {v}"
                f" {tuple(mesh.vertices[v])}"
            )
    return mesh


class P1Space:
    """Interior-vertex DOF indexing for a mesh (homogeneous Dirichlet)."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        interior = ~mesh.boundary_vertices
        self.interior_index = np.where(interior, np.cumsum(interior) - 1, -1)
        self.dof_vertices = np.nonzero(interior)[0]
        self.interior_index.setflags(write=False)
        self.dof_vertices.setflags(write=False)

    @property
    def dim(self):
        return len(self.dof_vertices)

    def to_full(self, values):
        """Scatter interior coefficients to a per-vertex array (0 on boundary)."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} coefficients, got {values.shape}")
        full = np.zeros(self.mesh.n_vertices)
        full[self.dof_vertices] = values
        return full

    def from_full(self, full):
        return np.asarray(full, dtype=float)[self.dof_vertices]


@dataclass(frozen=True)
class Prolongation:
    """Injection data from a mesh into its bisection refinement.

    Vertices of the coarse mesh keep their ids; each new vertex is the
    midpoint of a coarse edge, recorded by its endpoint pair.  The parent
    triangle of every fine triangle is kept for nestedness checks.
    """

    coarse_mesh: Mesh
    n_coarse_vertices: int
    mid_parents: np.ndarray       # (n_new, 2) coarse vertex ids
    cut_edges: np.ndarray         # coarse edge ids that were bisected
    parent_triangles: np.ndarray  # (n_fine_triangles,) coarse triangle ids

    def vertex_values(self, coarse_full):
        """Per-vertex values on the fine mesh from per-vertex coarse values."""
        coarse_full = np.asarray(coarse_full, dtype=float)
        mids = 0.5 * (
            coarse_full[self.mid_parents[:, 0]] + coarse_full[self.mid_parents[:, 1]]
        )
        return np.concatenate([coarse_full, mids])


def prolong(coarse, prolongation: Prolongation, fine_space: P1Space):
    """Interpolate interior coefficients onto the refined space.

    The resulting P1 function coincides pointwise with the coarse one:
    surviving vertices keep their value, midpoints average their parent
    endpoints (boundary parents contribute 0).
    """
    coarse_space = P1Space(prolongation.coarse_mesh)
    coarse = np.asarray(coarse, dtype=float)
    if coarse.shape != (coarse_space.dim,):
        raise ValueError(
            f"coefficient vector has length {coarse.shape}, space has dim {coarse_space.dim}"
        )
    full = prolongation.vertex_values(coarse_space.to_full(coarse))
    if len(full) != fine_space.mesh.n_vertices:
        raise ValueError("prolongation does not match the fine space's mesh")
    return fine_space.from_full(full)


def _closure(tri_edges, marked):
    """Mark refinement edges until every triangle with a marked side has
    its refinement edge marked (fixpoint, iterative)."""
    while True:
        need = marked[tri_edges[:, 1]] | marked[tri_edges[:, 2]]
        fresh = need & ~marked[tri_edges[:, 0]]
        if not fresh.any():
            return marked
        marked[tri_edges[fresh, 0]] = True


def refine_nvb(mesh: Mesh, marked_edges):
    """Bisect all marked edges by newest-vertex bisection with closure.

    Returns the refined conforming mesh and the :class:`Prolongation`
    recording every new midpoint.  Triangles may be bisected once, twice,
    or three times depending on how many of their edges end up marked.
    """
    marked_edges = np.asarray(marked_edges, dtype=np.int64).ravel()
    if marked_edges.size and (
        marked_edges.min() < 0 or marked_edges.max() >= mesh.n_edges
    ):
        raise ValueError("marked edge id not present in mesh")

    marked = np.zeros(mesh.n_edges, dtype=bool)
    marked[marked_edges] = True
    marked = _closure(mesh.tri_edges, marked)

    n_old = mesh.n_vertices
    cut_ids = np.nonzero(marked)[0]  # ascending edge id: deterministic
    edge_to_new = np.full(mesh.n_edges, -1, dtype=np.int64)
    edge_to_new[cut_ids] = n_old + np.arange(len(cut_ids))
    mid_parents = mesh.edges[cut_ids]
    mid_coords = 0.5 * (
        mesh.vertices[mid_parents[:, 0]] + mesh.vertices[mid_parents[:, 1]]
    )
    new_vertices = np.concatenate([mesh.vertices, mid_coords])

    tris = mesh.triangles
    te = mesh.tri_edges
    m_r = edge_to_new[te[:, 0]]  # midpoint of refinement edge (v0, v1)
    m_1 = edge_to_new[te[:, 1]]  # midpoint of (v1, v2)
    m_2 = edge_to_new[te[:, 2]]  # midpoint of (v2, v0)

    v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
    parent_ids = np.arange(mesh.n_triangles)
    out_tris = []
    out_parent = []

    untouched = m_r < 0  # closure guarantees no other edge is cut then
    out_tris.append(tris[untouched])
    out_parent.append(parent_ids[untouched])

    cut = ~untouched
    # First bisection: children (v2, v0, m) and (v1, v2, m); their
    # refinement edges are exactly the parent's remaining sides, so a
    # second cut of those sides stays within the child.
    for (a, b, c), msub in (
        ((v2, v0, m_r), m_2),  # child on the (v2, v0) side
        ((v1, v2, m_r), m_1),  # child on the (v1, v2) side
    ):
        plain = cut & (msub < 0)
        out_tris.append(np.stack([a[plain], b[plain], c[plain]], axis=1))
        out_parent.append(parent_ids[plain])
        twice = cut & (msub >= 0)
        # grandchildren of (a, b, c), refinement edge (a, b) cut at msub
        out_tris.append(np.stack([c[twice], a[twice], msub[twice]], axis=1))
        out_parent.append(parent_ids[twice])
        out_tris.append(np.stack([b[twice], c[twice], msub[twice]], axis=1))
        out_parent.append(parent_ids[twice])

    new_tris = np.concatenate(out_tris)
    parents = np.concatenate(out_parent)
    order = np.argsort(parents, kind="stable")
    new_tris = new_tris[order]
    parents = parents[order]

    refined = Mesh(new_vertices, new_tris)
    return refined, Prolongation(mesh, n_old, mid_parents, cut_ids, parents)


def uniform_refine(mesh: Mesh):
    """One sweep of newest-vertex bisection with every edge marked."""
    return refine_nvb(mesh, np.arange(mesh.n_edges))


@dataclass(frozen=True)
class EdgePatch:
    """Geometry of the virtual bisection of one interior edge.

    ``sub_triangles`` holds the four triangles obtained by joining the
    edge midpoint to the opposite vertices: rows 0-1 tile the first
    incident triangle, rows 2-3 the second.  Vertex order per sub-triangle
    is (edge endpoint, midpoint, opposite vertex).
    """

    edge_id: int
    vertex_ids: np.ndarray        # (i, j, opposite_0, opposite_1)
    midpoint: np.ndarray          # (2,)
    sub_triangles: np.ndarray     # (4, 3, 2) coordinates
    parent_triangles: np.ndarray  # (2,) triangle ids


def bisect_patch_geometry(mesh: Mesh, edge_id: int) -> EdgePatch:
    """Split the two triangles sharing an interior edge at its midpoint."""
    edge_id = int(edge_id)
    if edge_id < 0 or edge_id >= mesh.n_edges:
        raise ValueError("edge id not present in mesh")
    if mesh.boundary_edges[edge_id]:
        raise ValueError(
            f"edge {edge_id} is a boundary edge; enrichment applies to interior edges only"
        )
    i, j = mesh.edges[edge_id]
    parents = mesh.edge_tris[edge_id]
    opposite = []
    for t in parents:
        tri = mesh.triangles[t]
        opp = tri[(tri != i) & (tri != j)]
        opposite.append(int(opp[0]))
    zi, zj = mesh.vertices[i], mesh.vertices[j]
    mid = 0.5 * (zi + zj)
    subs = np.empty((4, 3, 2))
    for k, opp in enumerate(opposite):
        zo = mesh.vertices[opp]
        subs[2 * k] = (zi, mid, zo)
        subs[2 * k + 1] = (zj, mid, zo)
    ids = np.array([i, j, opposite[0], opposite[1]], dtype=np.int64)
    return EdgePatch(edge_id, ids, mid, subs, parents.copy())


# ---------------------------------------------------------------------------
# Domain constructors


def unit_square_mesh() -> Mesh:
    """Two right isosceles triangles on (0,1)^2 sharing the diagonal
    (0,0)-(1,1) as common refinement edge."""
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    triangles = np.array([[2, 0, 1], [0, 2, 3]])
    return build_mesh(vertices, triangles)


def l_shape_mesh() -> Mesh:
    """Six right isosceles triangles fanning around the reentrant corner of
    (-1,1)^2 minus the fourth quadrant; hypotenuses are the refinement edges."""
    vertices = np.array(
        [
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 1.0],
            [0.0, 1.0],
            [-1.0, 1.0],
            [-1.0, 0.0],
            [-1.0, -1.0],
            [0.0, -1.0],
        ]
    )
    # fan (origin, a, b); the hypotenuse joins the origin to the far corner
    corners = [1, 2, 3, 4, 5, 6, 7]
    triangles = []
    for k in range(6):
        a, b = corners[k], corners[k + 1]
        if k % 2 == 0:
            triangles.append([b, 0, a])  # hypotenuse (b, origin)
        else:
            triangles.append([0, a, b])  # hypotenuse (origin, a)
    return build_mesh(vertices, np.array(triangles))


def tensor_grid_mesh(xs, ys=None) -> Mesh:
    """Right-triangle mesh on a tensor grid; cell diagonals (refinement
    edges) run from the lower-left to the upper-right corner."""
    xs = np.asarray(xs, dtype=float)
    ys = xs if ys is None else np.asarray(ys, dtype=float)
    nx, ny = len(xs), len(ys)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

    def vid(i, j):
        return i * ny + j

    triangles = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = vid(i, j)
            b = vid(i + 1, j)
            c = vid(i + 1, j + 1)
            d = vid(i, j + 1)
            triangles.append([c, a, b])
            triangles.append([a, c, d])
    return build_mesh(vertices, np.array(triangles))


# ---------------------------------------------------------------------------
# Plain-text snapshot format


def write_ascii_tri(mesh: Mesh, path):
    """Write a mesh snapshot in the ``ascii-tri v1`` format."""
    lines = ["ascii-tri v1", str(mesh.n_vertices)]
    lines.extend(f"{float(x)!r} {float(y)!r}" for x, y in mesh.vertices)
    lines.append(str(mesh.n_triangles))
    lines.extend(f"{a} {b} {c}" for a, b, c in mesh.triangles)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_ascii_tri(path) -> Mesh:
    with open(path) as fh:
        tokens = fh.read().split("\n")
    if tokens[0].strip() != "ascii-tri v1":
        raise MeshError(f"unrecognized mesh header {tokens[0]!r}")
    pos = 1
    nv = int(tokens[pos])
    pos += 1
    vertices = np.array(
        [[float(v) for v in tokens[pos + k].split()] for k in range(nv)]
    )
    pos += nv
    nt = int(tokens[pos])
    pos += 1
    triangles = np.array(
        [[int(v) for v in tokens[pos + k].split()] for k in range(nt)]
    )
    return build_mesh(vertices, triangles)
