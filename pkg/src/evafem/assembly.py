"""Assembly of the P1 system and evaluation of the discrete energy.

Diffusion is piecewise constant per element (sampled at centroids), so the
stiffness integrals are exact; reaction and load terms use the symmetric
degree-6 quadrature rule.  Homogeneous Dirichlet conditions are imposed by
restricting to interior-vertex degrees of freedom.
"""

import numpy as np
import scipy.sparse as sp

from evafem import kernels
from evafem.kernels import numpy_backend
from evafem.mesh import P1Space
from evafem.quadrature import DEGREE6


class AssemblyError(ValueError):
    pass


def element_diffusion(mesh, problem):
    """Per-element diffusion matrices sampled at the centroids."""
    centroids = mesh.triangle_coords().mean(axis=1)
    diff = np.asarray(problem.diffusion(centroids), dtype=float)
    if diff.shape != (mesh.n_triangles, 2, 2):
        raise AssemblyError("diffusion field must return one 2x2 matrix per point")
    if np.max(np.abs(diff[:, 0, 1] - diff[:, 1, 0])) > 0.0:
        raise AssemblyError("diffusion matrices must be symmetric")
    return diff


def _restrict(matrix, space):
    idx = space.dof_vertices
    return matrix.tocsr()[idx][:, idx].tocsr()


def _scatter_local_matrices(mesh, local):
    tris = mesh.triangles
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    nv = mesh.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(nv, nv))


def assemble_stiffness(space: P1Space, problem, elem_diff=None):
    """Sparse diffusion form on interior DOFs: (i, j) -> sum_T |T| grad_i . A grad_j."""
    mesh = space.mesh
    if elem_diff is None:
        elem_diff = element_diffusion(mesh, problem)
    _, _, local = kernels.stiffness_entries(mesh.triangle_coords(), elem_diff)
    diag = local[:, [0, 1, 2], [0, 1, 2]]
    if np.any(diag <= 0.0):
        t = int(np.argmax(np.any(diag <= 0.0, axis=1)))
        raise AssemblyError(
            f"non-SPD diffusion contribution on triangle {t}: check the diffusion field"
        )
    return _restrict(_scatter_local_matrices(mesh, local), space)


def assemble_mass(space: P1Space):
    """Exact P1 mass matrix on interior DOFs."""
    mesh = space.mesh
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = mesh.areas[:, None, None] * base
    return _restrict(_scatter_local_matrices(mesh, local), space)


def assemble_load(space: P1Space, problem, quad=DEGREE6):
    """Load vector b_j = sum_T |T| sum_q w_q f(x_q) lambda_j(x_q)."""
    mesh = space.mesh
    pts = quad.physical_points(mesh.triangle_coords())
    fq = np.asarray(problem.load(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:2])
    if not np.all(np.isfinite(fq)):
        t, q = np.argwhere(~np.isfinite(fq))[0]
        raise AssemblyError(
            f"load is not finite at quadrature point {tuple(pts[t, q])} (triangle {t})"
        )
    local = np.einsum("t,q,tq,qj->tj", mesh.areas, quad.weights, fq, quad.points)
    full = np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)
    return full[space.dof_vertices]


class DiscreteEnergy:
    """Cached evaluator of the discrete energy and its gradient.

    For linear reactions the full operator (diffusion + c * mass) is
    available as a sparse matrix; the quadrature path is used for the
    reaction term in all cases, so linear and nonlinear problems share one
    code path up to rounding.
    """

    def __init__(self, space: P1Space, problem, quad=DEGREE6):
        self.space = space
        self.problem = problem
        self.quad = quad
        mesh = space.mesh
        self.elem_diff = element_diffusion(mesh, problem)
        self.stiffness = assemble_stiffness(space, problem, self.elem_diff)
        self.load_vector = assemble_load(space, problem, quad)
        self._tris = mesh.triangles
        self._areas = mesh.areas
        self._lamT = quad.points.T.copy()
        self._full_matrix = None

    @property
    def dim(self):
        return self.space.dim

    def point_values(self, x):
        """Values of the P1 function at the element quadrature points."""
        full = self.space.to_full(x)
        return full[self._tris] @ self._lamT

    def value(self, x):
        """Energy 0.5 a(u,u) + int Phi(u) - l(u)."""
        x = np.asarray(x, dtype=float)
        quad_term = self._reaction_energy(self.point_values(x))
        out = 0.5 * float(x @ (self.stiffness @ x)) + quad_term - float(self.load_vector @ x)
        if not np.isfinite(out):
            raise AssemblyError("energy evaluated to a non-finite value")
        return out

    def gradient(self, x):
        """Assembled first variation: a(u, .) + int phi(u) . - l(.)."""
        x = np.asarray(x, dtype=float)
        local = self._reaction_gradient(self.point_values(x))
        full = np.bincount(
            self._tris.ravel(), weights=local.ravel(), minlength=self.space.mesh.n_vertices
        )
        return self.stiffness @ x + full[self.space.dof_vertices] - self.load_vector

    def energy_norm_sq(self, x):
        """Squared norm in the diffusion form only: x . (A x)."""
        x = np.asarray(x, dtype=float)
        return float(x @ (self.stiffness @ x))

    def reaction_moments(self, x):
        """(int phi(u) u, int phi'(u) u^2), needed by the edge indicators."""
        uq = self.point_values(x)
        r = self.problem.reaction
        if r.code is not None:
            return kernels.reaction_moments(self._areas, uq, self.quad.weights, r.code, r.c)
        return numpy_backend.generic_reaction_moments(
            self._areas, uq, self.quad.weights, r.phi, r.dphi
        )

    def _reaction_energy(self, uq):
        r = self.problem.reaction
        if r.code is not None:
            return kernels.reaction_energy(self._areas, uq, self.quad.weights, r.code, r.c)
        return numpy_backend.generic_reaction_energy(self._areas, uq, self.quad.weights, r.big_phi)

    def _reaction_gradient(self, uq):
        r = self.problem.reaction
        if r.code is not None:
            return kernels.reaction_gradient(
                self._areas, uq, self.quad.weights, self.quad.points, r.code, r.c
            )
        return numpy_backend.generic_reaction_gradient(
            self._areas, uq, self.quad.weights, self.quad.points, r.phi
        )

    # linear-reaction extras -------------------------------------------------

    @property
    def full_matrix(self):
        """Diffusion + c * mass; the operator the linear solver works with."""
        if not self.problem.reaction.is_linear:
            raise AssemblyError("full matrix exists only for linear reactions")
        if self._full_matrix is None:
            c = self.problem.reaction.c
            if c == 0.0:
                self._full_matrix = self.stiffness
            else:
                self._full_matrix = (self.stiffness + c * assemble_mass(self.space)).tocsr()
        return self._full_matrix

    def matrix_value(self, x):
        """Linear-quadratic energy through the assembled operator."""
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ (self.full_matrix @ x)) - float(self.load_vector @ x)

    def full_norm_sq(self, x):
        """Squared norm in the full bilinear form (diffusion + c * mass)."""
        x = np.asarray(x, dtype=float)
        return float(x @ (self.full_matrix @ x))


def energy(space, problem, u):
    return DiscreteEnergy(space, problem).value(u)


def gradient(space, problem, u):
    return DiscreteEnergy(space, problem).gradient(u)


def energy_norm_sq(space, problem, u):
    return DiscreteEnergy(space, problem).energy_norm_sq(u)


def exact_error_norm_sq(space, problem, u, quad=DEGREE6):
    """Quadrature value of |u_exact - u_h|^2 in the diffusion norm."""
    if problem.exact_gradient is None:
        raise ValueError(f"problem {problem.name} has no exact gradient")
    mesh = space.mesh
    coords = mesh.triangle_coords()
    elem_diff = element_diffusion(mesh, problem)
    _, grads = numpy_backend.p1_gradients(coords)
    full = space.to_full(u)
    grad_h = np.einsum("tv,tvd->td", full[mesh.triangles], grads)
    pts = quad.physical_points(coords)
    grad_ex = problem.exact_gradient(pts.reshape(-1, 2)).reshape(pts.shape[0], pts.shape[1], 2)
    diff_vec = grad_ex - grad_h[:, None, :]
    flux = np.einsum("tde,tqe->tqd", elem_diff, diff_vec)
    per_point = np.einsum("tqd,tqd->tq", diff_vec, flux)
    return float(mesh.areas @ (per_point @ quad.weights))
