"""Edge-bisection refinement indicators and minimal-cardinality marking.

For every interior edge, the virtual hat function of the edge midpoint
spans, together with the current iterate, a two-dimensional trial space.
The energy the enrichment could remove is computed from a closed-form
2x2 solve: exactly for linear-quadratic energies, and through one
linearization step (solve the Hessian system, then take half the first
variation of the update) otherwise.  The per-edge work reduces to patch
integrals because only two global scalars enter every system.
"""

from dataclasses import dataclass

import numpy as np

from evafem import kernels
from evafem.assembly import DiscreteEnergy
from evafem.kernels import numpy_backend
from evafem.mesh import P1Space, bisect_patch_geometry
from evafem.quadrature import DEGREE6

_DEGENERACY = 1e-14


@dataclass(frozen=True)
class EdgeIndicator:
    edge_id: int
    decay: float


class Indicators:
    """Non-negative energy decays, one per interior edge."""

    def __init__(self, edge_ids, decays):
        self.edge_ids = np.asarray(edge_ids, dtype=np.int64)
        self.decays = np.asarray(decays, dtype=float)

    def __len__(self):
        return len(self.edge_ids)

    def __iter__(self):
        for eid, dec in zip(self.edge_ids, self.decays):
            yield EdgeIndicator(int(eid), float(dec))

    def total(self):
        return float(self.decays.sum())


@dataclass(frozen=True)
class MeshGlobals:
    """Scalars entering every local system; computed once per mesh."""

    a_uu_diff: float   # diffusion form a(u*, u*)
    m_phi_u: float     # int phi(u*) u*
    m_dphi_uu: float   # int phi'(u*) u*^2
    ell_u: float       # l(u*)

    @property
    def form_uu(self):
        """Full bilinear form of u* against itself (linear reactions)."""
        return self.a_uu_diff + self.m_phi_u

    @property
    def hessian_uu(self):
        return self.a_uu_diff + self.m_dphi_uu

    @property
    def variation_u(self):
        """First variation of the energy at u* in the direction u*."""
        return self.a_uu_diff + self.m_phi_u - self.ell_u


@dataclass(frozen=True)
class EdgeInteractions:
    """Patch integrals of one interior edge's midpoint hat function."""

    edge_id: int
    s_ue: float     # diffusion cross term a(u*, hat)
    s_ee: float     # a(hat, hat)
    r_ue: float     # int phi'(u*) u* hat
    r_ee: float     # int phi'(u*) hat^2
    r_phie: float   # int phi(u*) hat
    load_e: float   # l(hat)
    scalars: MeshGlobals


@dataclass(frozen=True)
class LocalSystem:
    """2x2 system of one edge: ``galerkin`` solves for the coefficients of
    the locally improved function, ``linearized`` for the update."""

    kind: str  # galerkin | linearized
    a_uu: float
    a_ue: float
    a_ee: float
    rhs_u: float
    rhs_e: float

    def residual(self, solution):
        z1, z2 = solution
        r1 = self.a_uu * z1 + self.a_ue * z2 - self.rhs_u
        r2 = self.a_ue * z1 + self.a_ee * z2 - self.rhs_e
        return max(abs(r1), abs(r2))


def mesh_globals(system: DiscreteEnergy, u_star) -> MeshGlobals:
    u_star = np.asarray(u_star, dtype=float)
    a_uu = system.energy_norm_sq(u_star)
    m_phi_u, m_dphi_uu = system.reaction_moments(u_star)
    ell_u = float(system.load_vector @ u_star)
    return MeshGlobals(a_uu, m_phi_u, m_dphi_uu, ell_u)


def _patch_arrays(space: P1Space, system: DiscreteEnergy, u_star, edge_ids, quad):
    """Gather per-edge patch data for the kernel call."""
    mesh = space.mesh
    edges = mesh.edges[edge_ids]
    tris = mesh.edge_tris[edge_ids]
    tri_sum = mesh.triangles[tris].sum(axis=2)  # (ne, 2) vertex-id sums
    opp = tri_sum - edges.sum(axis=1)[:, None]

    vids = np.concatenate([edges, opp], axis=1)  # (ne, 4): i, j, opp0, opp1
    pts = mesh.vertices[vids]
    full = space.to_full(np.asarray(u_star, dtype=float))
    uvals = full[vids]
    diff = system.elem_diff[tris]

    zi, zj = pts[:, 0], pts[:, 1]
    mid = 0.5 * (zi + zj)
    sub = np.empty((len(edge_ids), 4, 3, 2))
    sub[:, 0, 0], sub[:, 0, 1], sub[:, 0, 2] = zi, mid, pts[:, 2]
    sub[:, 1, 0], sub[:, 1, 1], sub[:, 1, 2] = zj, mid, pts[:, 2]
    sub[:, 2, 0], sub[:, 2, 1], sub[:, 2, 2] = zi, mid, pts[:, 3]
    sub[:, 3, 0], sub[:, 3, 1], sub[:, 3, 2] = zj, mid, pts[:, 3]
    phys = np.einsum("qv,nkvd->nkqd", quad.points, sub)
    fq = np.asarray(
        system.problem.load(phys.reshape(-1, 2)), dtype=float
    ).reshape(phys.shape[:3])
    return pts, uvals, diff, fq


def _patch_entries(space, system, u_star, edge_ids, quad=DEGREE6):
    pts, uvals, diff, fq = _patch_arrays(space, system, u_star, edge_ids, quad)
    reaction = system.problem.reaction
    if reaction.code is not None:
        return kernels.edge_patch_entries(
            pts, uvals, diff, fq, quad.weights, quad.points, reaction.code, reaction.c
        )
    return numpy_backend.generic_edge_patch_entries(
        pts, uvals, diff, fq, quad.weights, quad.points, reaction.phi, reaction.dphi
    )


def local_interactions(space, problem, u_star, edge_id, system=None,
                       scalars=None) -> EdgeInteractions:
    """Patch integrals and cached global scalars for a single interior edge."""
    bisect_patch_geometry(space.mesh, edge_id)  # validates interiority
    if system is None:
        system = DiscreteEnergy(space, problem)
    if scalars is None:
        scalars = mesh_globals(system, u_star)
    ids = np.array([edge_id], dtype=np.int64)
    s_ue, s_ee, r_ue, r_ee, r_phie, load_e = _patch_entries(space, system, u_star, ids)
    return EdgeInteractions(
        int(edge_id), float(s_ue[0]), float(s_ee[0]), float(r_ue[0]),
        float(r_ee[0]), float(r_phie[0]), float(load_e[0]), scalars,
    )


def local_system(inter: EdgeInteractions, linearized: bool) -> LocalSystem:
    g = inter.scalars
    if linearized:
        return LocalSystem(
            "linearized",
            g.hessian_uu,
            inter.s_ue + inter.r_ue,
            inter.s_ee + inter.r_ee,
            -g.variation_u,
            -(inter.s_ue + inter.r_phie - inter.load_e),
        )
    return LocalSystem(
        "galerkin",
        g.form_uu,
        inter.s_ue + inter.r_ue,
        inter.s_ee + inter.r_ee,
        g.ell_u,
        inter.load_e,
    )


def solve_local(system: LocalSystem):
    """Closed-form solve of the 2x2 system; ``None`` when degenerate."""
    det = system.a_uu * system.a_ee - system.a_ue * system.a_ue
    scale = abs(system.a_uu * system.a_ee)
    if not det > _DEGENERACY * scale:
        return None
    z1 = (system.rhs_u * system.a_ee - system.rhs_e * system.a_ue) / det
    z2 = (system.a_uu * system.rhs_e - system.a_ue * system.rhs_u) / det
    return z1, z2


def edge_decay(system: LocalSystem, solution) -> float:
    """Non-negative energy decay of the local enrichment.

    ``galerkin`` systems use the closed form in the coefficients
    (alpha, beta) of the locally improved function; ``linearized`` systems
    use minus half the first variation of the update, which reproduces the
    exact decay for linear-quadratic energies.
    """
    if solution is None:
        return 0.0
    z1, z2 = solution
    if system.kind == "galerkin":
        one_m = 1.0 - z1
        value = (
            0.5 * one_m * one_m * system.a_uu
            - z2 * one_m * system.a_ue
            + 0.5 * z2 * z2 * system.a_ee
        )
    else:
        value = 0.5 * (system.rhs_u * z1 + system.rhs_e * z2)
    return max(value, 0.0)


def compute_indicators(space, problem, u_star, system=None, linearized=None,
                       quad=DEGREE6) -> Indicators:
    """Energy decay of every interior edge's virtual bisection.

    ``linearized`` defaults to the exact closed form for linear reactions
    and to the first-order predictor otherwise; either path is available
    for both problem classes (for linear energies they produce identical
    decays up to rounding).
    """
    if system is None:
        system = DiscreteEnergy(space, problem)
    if linearized is None:
        linearized = not problem.is_linear
    edge_ids = space.mesh.interior_edge_ids()
    if len(edge_ids) == 0:
        return Indicators(edge_ids, np.zeros(0))
    scalars = mesh_globals(system, u_star)
    s_ue, s_ee, r_ue, r_ee, r_phie, load_e = _patch_entries(
        space, system, u_star, edge_ids, quad
    )
    a_ue = s_ue + r_ue
    a_ee = s_ee + r_ee
    if linearized:
        a_uu = scalars.hessian_uu
        rhs_u = -scalars.variation_u
        rhs_e = -(s_ue + r_phie - load_e)
    else:
        a_uu = scalars.form_uu
        rhs_u = scalars.ell_u
        rhs_e = load_e

    det = a_uu * a_ee - a_ue * a_ue
    ok = det > _DEGENERACY * np.abs(a_uu * a_ee)
    safe_det = np.where(ok, det, 1.0)
    z1 = (rhs_u * a_ee - rhs_e * a_ue) / safe_det
    z2 = (a_uu * rhs_e - a_ue * rhs_u) / safe_det
    if linearized:
        decay = 0.5 * (rhs_u * z1 + rhs_e * z2)
    else:
        one_m = 1.0 - z1
        decay = 0.5 * one_m * one_m * a_uu - z2 * one_m * a_ue + 0.5 * z2 * z2 * a_ee
    decay = np.where(ok, np.maximum(decay, 0.0), 0.0)
    return Indicators(edge_ids, decay)


def doerfler_mark(indicators, theta: float):
    """Smallest set of edges whose decays sum to at least theta times the
    total decay; ties in the descending decay order break by ascending
    edge id.  Returns a sorted array of edge ids (empty when nothing can
    be gained)."""
    if not 0.0 < theta < 1.0:
        raise ValueError("the bulk parameter theta must lie in (0, 1)")
    if isinstance(indicators, Indicators):
        edge_ids, decays = indicators.edge_ids, indicators.decays
    else:
        pairs = [(ind.edge_id, ind.decay) for ind in indicators]
        edge_ids = np.array([p[0] for p in pairs], dtype=np.int64)
        decays = np.array([p[1] for p in pairs], dtype=float)
    total = decays.sum()
    if total <= 0.0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((edge_ids, -decays))
    csum = np.cumsum(decays[order])
    count = int(np.searchsorted(csum, theta * total)) + 1
    count = min(count, len(order))
    return np.sort(edge_ids[order[:count]])
