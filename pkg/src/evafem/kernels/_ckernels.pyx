# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-element and per-edge quadrature kernels.

Same contracts as ``evafem.kernels.numpy_backend``; one fused pass per
element (or edge patch) instead of chains of array temporaries.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, expm1, fabs

cnp.import_array()


cdef inline double _phi(int kind, double c, double u) noexcept nogil:
    if kind == 0:
        return c * u
    elif kind == 1:
        return u * u * u
    elif kind == 2:
        return fabs(u) * u
    return expm1(u)


cdef inline double _big_phi(int kind, double c, double u) noexcept nogil:
    if kind == 0:
        return 0.5 * c * u * u
    elif kind == 1:
        return 0.25 * u * u * u * u
    elif kind == 2:
        return fabs(u) * u * u / 3.0
    return expm1(u) - u


cdef inline double _dphi(int kind, double c, double u) noexcept nogil:
    if kind == 0:
        return c
    elif kind == 1:
        return 3.0 * u * u
    elif kind == 2:
        return 2.0 * fabs(u)
    return exp(u)


def stiffness_entries(coords, diff):
    """Signed areas, basis gradients, and local diffusion matrices."""
    cdef const double[:, :, ::1] xy = np.ascontiguousarray(coords, dtype=np.float64)
    cdef const double[:, :, ::1] a = np.ascontiguousarray(diff, dtype=np.float64)
    cdef Py_ssize_t nt = xy.shape[0]
    areas_np = np.empty(nt)
    grads_np = np.empty((nt, 3, 2))
    local_np = np.empty((nt, 3, 3))
    cdef double[::1] areas = areas_np
    cdef double[:, :, ::1] grads = grads_np
    cdef double[:, :, ::1] local = local_np
    cdef Py_ssize_t t, i, j
    cdef double s, inv2s, measure
    cdef double g[3][2]
    cdef double fx, fy
    with nogil:
        for t in range(nt):
            s = 0.5 * ((xy[t, 1, 0] - xy[t, 0, 0]) * (xy[t, 2, 1] - xy[t, 0, 1])
                       - (xy[t, 1, 1] - xy[t, 0, 1]) * (xy[t, 2, 0] - xy[t, 0, 0]))
            areas[t] = s
            inv2s = 1.0 / (2.0 * s)
            for i in range(3):
                g[i][0] = -(xy[t, (i + 2) % 3, 1] - xy[t, (i + 1) % 3, 1]) * inv2s
                g[i][1] = (xy[t, (i + 2) % 3, 0] - xy[t, (i + 1) % 3, 0]) * inv2s
                grads[t, i, 0] = g[i][0]
                grads[t, i, 1] = g[i][1]
            measure = fabs(s)
            for j in range(3):
                fx = a[t, 0, 0] * g[j][0] + a[t, 0, 1] * g[j][1]
                fy = a[t, 1, 0] * g[j][0] + a[t, 1, 1] * g[j][1]
                for i in range(3):
                    local[t, i, j] = measure * (g[i][0] * fx + g[i][1] * fy)
    return areas_np, grads_np, local_np


def reaction_energy(areas, uq, w, int kind, double c):
    cdef const double[::1] ar = np.ascontiguousarray(areas, dtype=np.float64)
    cdef const double[:, ::1] u = np.ascontiguousarray(uq, dtype=np.float64)
    cdef const double[::1] wt = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t nt = u.shape[0], nq = u.shape[1]
    cdef Py_ssize_t t, q
    cdef double total = 0.0, acc
    with nogil:
        for t in range(nt):
            acc = 0.0
            for q in range(nq):
                acc += wt[q] * _big_phi(kind, c, u[t, q])
            total += fabs(ar[t]) * acc
    return total


def reaction_gradient(areas, uq, w, lam, int kind, double c):
    cdef const double[::1] ar = np.ascontiguousarray(areas, dtype=np.float64)
    cdef const double[:, ::1] u = np.ascontiguousarray(uq, dtype=np.float64)
    cdef const double[::1] wt = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[:, ::1] lm = np.ascontiguousarray(lam, dtype=np.float64)
    cdef Py_ssize_t nt = u.shape[0], nq = u.shape[1]
    out_np = np.zeros((nt, 3))
    cdef double[:, ::1] out = out_np
    cdef Py_ssize_t t, q
    cdef double measure, pw
    with nogil:
        for t in range(nt):
            measure = fabs(ar[t])
            for q in range(nq):
                pw = measure * wt[q] * _phi(kind, c, u[t, q])
                out[t, 0] += pw * lm[q, 0]
                out[t, 1] += pw * lm[q, 1]
                out[t, 2] += pw * lm[q, 2]
    return out_np


def reaction_moments(areas, uq, w, int kind, double c):
    cdef const double[::1] ar = np.ascontiguousarray(areas, dtype=np.float64)
    cdef const double[:, ::1] u = np.ascontiguousarray(uq, dtype=np.float64)
    cdef const double[::1] wt = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t nt = u.shape[0], nq = u.shape[1]
    cdef Py_ssize_t t, q
    cdef double m1 = 0.0, m2 = 0.0, a1, a2, uv, wv, measure
    with nogil:
        for t in range(nt):
            a1 = 0.0
            a2 = 0.0
            for q in range(nq):
                uv = u[t, q]
                wv = wt[q] * uv
                a1 += _phi(kind, c, uv) * wv
                a2 += _dphi(kind, c, uv) * uv * wv
            measure = fabs(ar[t])
            m1 += measure * a1
            m2 += measure * a2
    return m1, m2


def edge_patch_entries(pts, uvals, diff, fq, w, lam, int kind, double c):
    """Fused patch integrals of the midpoint hat function for many edges."""
    cdef const double[:, :, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef const double[:, ::1] uv = np.ascontiguousarray(uvals, dtype=np.float64)
    cdef const double[:, :, :, ::1] dm = np.ascontiguousarray(diff, dtype=np.float64)
    cdef const double[:, :, ::1] f = np.ascontiguousarray(fq, dtype=np.float64)
    cdef const double[::1] wt = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[:, ::1] lm = np.ascontiguousarray(lam, dtype=np.float64)
    cdef Py_ssize_t ne = p.shape[0], nq = wt.shape[0]

    s_ue_np = np.empty(ne)
    s_ee_np = np.empty(ne)
    r_ue_np = np.empty(ne)
    r_ee_np = np.empty(ne)
    r_phie_np = np.empty(ne)
    load_np = np.empty(ne)
    cdef double[::1] s_ue = s_ue_np, s_ee = s_ee_np, r_ue = r_ue_np
    cdef double[::1] r_ee = r_ee_np, r_phie = r_phie_np, load_e = load_np

    cdef Py_ssize_t n, k, q, i, side
    cdef double mx, my, um
    cdef double sx[3]
    cdef double sy[3]
    cdef double un[3]
    cdef double g[3][2]
    cdef double s, inv2s, measure
    cdef double gux, guy, gex, gey, aex, aey
    cdef double acc_sue, acc_see, acc_rue, acc_ree, acc_rphie, acc_load
    cdef double uqv, eqv, wq, ph, dph

    with nogil:
        for n in range(ne):
            mx = 0.5 * (p[n, 0, 0] + p[n, 1, 0])
            my = 0.5 * (p[n, 0, 1] + p[n, 1, 1])
            um = 0.5 * (uv[n, 0] + uv[n, 1])
            acc_sue = acc_see = acc_rue = acc_ree = acc_rphie = acc_load = 0.0
            for k in range(4):
                side = 0 if k < 2 else 1
                # sub-triangle (endpoint, midpoint, opposite vertex)
                sx[0] = p[n, k & 1, 0]
                sy[0] = p[n, k & 1, 1]
                sx[1] = mx
                sy[1] = my
                sx[2] = p[n, 2 + side, 0]
                sy[2] = p[n, 2 + side, 1]
                un[0] = uv[n, k & 1]
                un[1] = um
                un[2] = uv[n, 2 + side]

                s = 0.5 * ((sx[1] - sx[0]) * (sy[2] - sy[0])
                           - (sy[1] - sy[0]) * (sx[2] - sx[0]))
                inv2s = 1.0 / (2.0 * s)
                measure = fabs(s)
                for i in range(3):
                    g[i][0] = -(sy[(i + 2) % 3] - sy[(i + 1) % 3]) * inv2s
                    g[i][1] = (sx[(i + 2) % 3] - sx[(i + 1) % 3]) * inv2s
                gux = un[0] * g[0][0] + un[1] * g[1][0] + un[2] * g[2][0]
                guy = un[0] * g[0][1] + un[1] * g[1][1] + un[2] * g[2][1]
                gex = g[1][0]
                gey = g[1][1]
                aex = dm[n, side, 0, 0] * gex + dm[n, side, 0, 1] * gey
                aey = dm[n, side, 1, 0] * gex + dm[n, side, 1, 1] * gey
                acc_sue += measure * (gux * aex + guy * aey)
                acc_see += measure * (gex * aex + gey * aey)

                for q in range(nq):
                    uqv = un[0] * lm[q, 0] + un[1] * lm[q, 1] + un[2] * lm[q, 2]
                    eqv = lm[q, 1]
                    wq = measure * wt[q] * eqv
                    ph = _phi(kind, c, uqv)
                    dph = _dphi(kind, c, uqv)
                    acc_rue += wq * dph * uqv
                    acc_ree += wq * dph * eqv
                    acc_rphie += wq * ph
                    acc_load += wq * f[n, k, q]
            s_ue[n] = acc_sue
            s_ee[n] = acc_see
            r_ue[n] = acc_rue
            r_ee[n] = acc_ree
            r_phie[n] = acc_rphie
            load_e[n] = acc_load
    return s_ue_np, s_ee_np, r_ue_np, r_ee_np, r_phie_np, load_np
