"""Vectorized numpy implementations of the numerical kernels.

All functions are pure; the compiled backend mirrors their signatures.
Reaction nonlinearities are identified by an integer code (see
``evafem.kernels``): 0 linear c*u, 1 cubic, 2 |u|*u, 3 exp(u)-1.
"""

import numpy as np


def _phi(kind, c, u):
    if kind == 0:
        return c * u
    if kind == 1:
        return u * u * u
    if kind == 2:
        return np.abs(u) * u
    if kind == 3:
        return np.expm1(u)
    raise ValueError(f"unknown reaction code {kind}")


def _big_phi(kind, c, u):
    if kind == 0:
        return 0.5 * c * u * u
    if kind == 1:
        return 0.25 * u ** 4
    if kind == 2:
        return np.abs(u) ** 3 / 3.0
    if kind == 3:
        return np.expm1(u) - u
    raise ValueError(f"unknown reaction code {kind}")


def _dphi(kind, c, u):
    if kind == 0:
        return np.full_like(u, c)
    if kind == 1:
        return 3.0 * u * u
    if kind == 2:
        return 2.0 * np.abs(u)
    if kind == 3:
        return np.exp(u)
    raise ValueError(f"unknown reaction code {kind}")


def _perp(v):
    out = np.empty_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    return out


def p1_gradients(coords):
    """Signed areas and constant basis gradients for triangles (nt, 3, 2)."""
    d1 = coords[:, 1] - coords[:, 0]
    d2 = coords[:, 2] - coords[:, 0]
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    grads = np.empty_like(coords)
    grads[:, 0] = _perp(coords[:, 2] - coords[:, 1])
    grads[:, 1] = _perp(coords[:, 0] - coords[:, 2])
    grads[:, 2] = _perp(coords[:, 1] - coords[:, 0])
    grads /= (2.0 * areas)[:, None, None]
    return areas, grads


def stiffness_entries(coords, diff):
    """Local diffusion matrices |T| grad_i . (A grad_j), exact for P1.

    Returns (areas, grads, local) with shapes (nt,), (nt, 3, 2), (nt, 3, 3).
    """
    areas, grads = p1_gradients(coords)
    flux = np.einsum("tde,tje->tjd", diff, grads)
    local = np.einsum("tid,tjd,t->tij", grads, flux, np.abs(areas))
    return areas, grads, local


def reaction_energy(areas, uq, w, kind, c):
    """sum_T |T| sum_q w_q Phi(u(x_q)) for element point values uq (nt, nq)."""
    return float(np.abs(areas) @ (_big_phi(kind, c, uq) @ w))


def reaction_gradient(areas, uq, w, lam, kind, c):
    """Per-element entries sum_q w_q phi(u_q) lambda_j(x_q) |T|, shape (nt, 3)."""
    return np.einsum("t,tq,q,qj->tj", np.abs(areas), _phi(kind, c, uq), w, lam)


def reaction_moments(areas, uq, w, kind, c):
    """Global integrals (int phi(u) u, int phi'(u) u^2) by quadrature."""
    absareas = np.abs(areas)
    wu = uq * w  # (nt, nq) weighted values
    m_phi_u = float(absareas @ np.sum(_phi(kind, c, uq) * wu, axis=1))
    m_dphi_uu = float(absareas @ np.sum(_dphi(kind, c, uq) * uq * wu, axis=1))
    return m_phi_u, m_dphi_uu


def edge_patch_entries(pts, uvals, diff, fq, w, lam, kind, c):
    """Patch integrals of the virtual midpoint hat function for many edges.

    Parameters
    ----------
    pts : (ne, 4, 2) coordinates (edge endpoints i, j and the two opposite
        vertices); the midpoint is computed internally.
    uvals : (ne, 4) nodal values of the current iterate at those vertices.
    diff : (ne, 2, 2, 2) diffusion matrix of the two incident triangles.
    fq : (ne, 4, nq) load values at the quadrature points of the four
        sub-triangles (i, m, opp0), (j, m, opp0), (i, m, opp1), (j, m, opp1).
    w, lam : quadrature weights (nq,) and barycentric points (nq, 3).
    kind, c : reaction code and linear coefficient.

    Returns
    -------
    (s_ue, s_ee, r_ue, r_ee, r_phie, load_e) : six (ne,) arrays with the
    diffusion cross terms, the reaction-weighted products
    int phi'(u) u phi_E, int phi'(u) phi_E^2, int phi(u) phi_E, and the
    load term int f phi_E, all summed over the four sub-triangles.
    """
    return _edge_patch_core(
        pts, uvals, diff, fq, w, lam,
        lambda u: _phi(kind, c, u), lambda u: _dphi(kind, c, u),
    )


def generic_edge_patch_entries(pts, uvals, diff, fq, w, lam, phi, dphi):
    """Callable-reaction variant of :func:`edge_patch_entries`."""
    return _edge_patch_core(pts, uvals, diff, fq, w, lam, phi, dphi)


def _edge_patch_core(pts, uvals, diff, fq, w, lam, phi, dphi):
    ne = pts.shape[0]
    zi, zj, z0, z1 = pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3]
    mid = 0.5 * (zi + zj)

    sub = np.empty((ne, 4, 3, 2))
    sub[:, 0, 0], sub[:, 0, 1], sub[:, 0, 2] = zi, mid, z0
    sub[:, 1, 0], sub[:, 1, 1], sub[:, 1, 2] = zj, mid, z0
    sub[:, 2, 0], sub[:, 2, 1], sub[:, 2, 2] = zi, mid, z1
    sub[:, 3, 0], sub[:, 3, 1], sub[:, 3, 2] = zj, mid, z1

    um = 0.5 * (uvals[:, 0] + uvals[:, 1])
    usub = np.empty((ne, 4, 3))
    usub[:, 0, 0], usub[:, 0, 1], usub[:, 0, 2] = uvals[:, 0], um, uvals[:, 2]
    usub[:, 1, 0], usub[:, 1, 1], usub[:, 1, 2] = uvals[:, 1], um, uvals[:, 2]
    usub[:, 2, 0], usub[:, 2, 1], usub[:, 2, 2] = uvals[:, 0], um, uvals[:, 3]
    usub[:, 3, 0], usub[:, 3, 1], usub[:, 3, 2] = uvals[:, 1], um, uvals[:, 3]

    dsub = diff[:, [0, 0, 1, 1]]  # (ne, 4, 2, 2)

    d1 = sub[:, :, 1] - sub[:, :, 0]
    d2 = sub[:, :, 2] - sub[:, :, 0]
    s_areas = 0.5 * (d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0])
    measure = np.abs(s_areas)

    grads = np.empty((ne, 4, 3, 2))
    grads[:, :, 0] = _perp(sub[:, :, 2] - sub[:, :, 1])
    grads[:, :, 1] = _perp(sub[:, :, 0] - sub[:, :, 2])
    grads[:, :, 2] = _perp(sub[:, :, 1] - sub[:, :, 0])
    grads /= (2.0 * s_areas)[..., None, None]

    grad_u = np.einsum("nkv,nkvd->nkd", usub, grads)
    grad_e = grads[:, :, 1]  # hat function: 1 at the midpoint, 0 elsewhere
    a_grad_e = np.einsum("nkde,nke->nkd", dsub, grad_e)
    s_ue = np.einsum("nkd,nkd,nk->n", grad_u, a_grad_e, measure)
    s_ee = np.einsum("nkd,nkd,nk->n", grad_e, a_grad_e, measure)

    uq = np.einsum("nkv,qv->nkq", usub, lam)
    eq = lam[:, 1]
    we = w * eq
    phi_q = phi(uq)
    dphi_q = dphi(uq)
    r_ue = np.einsum("nk,nkq,q->n", measure, dphi_q * uq, we)
    r_ee = np.einsum("nk,nkq,q->n", measure, dphi_q, we * eq)
    r_phie = np.einsum("nk,nkq,q->n", measure, phi_q, we)
    load_e = np.einsum("nk,nkq,q->n", measure, fq, we)
    return s_ue, s_ee, r_ue, r_ee, r_phie, load_e


# generic (callable-based) variants used for custom reactions ---------------


def generic_reaction_energy(areas, uq, w, big_phi):
    return float(np.abs(areas) @ (big_phi(uq) @ w))


def generic_reaction_gradient(areas, uq, w, lam, phi):
    return np.einsum("t,tq,q,qj->tj", np.abs(areas), phi(uq), w, lam)


def generic_reaction_moments(areas, uq, w, phi, dphi):
    absareas = np.abs(areas)
    wu = uq * w
    m_phi_u = float(absareas @ np.sum(phi(uq) * wu, axis=1))
    m_dphi_uu = float(absareas @ np.sum(dphi(uq) * uq * wu, axis=1))
    return m_phi_u, m_dphi_uu
