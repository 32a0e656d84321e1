#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Builds a realistic adaptively-sized L-shape state (elements, per-element
diffusion, iterate values, edge patches) and times every kernel in both
backends.  Agreement is checked to near machine precision while timing.

Usage: python benchmarks/bench_kernels.py [--sweeps N] [--repeats K]
"""

import argparse
import time

import numpy as np

from evafem.kernels import numpy_backend
from evafem.mesh import P1Space, l_shape_mesh, uniform_refine
from evafem.quadrature import DEGREE6

try:
    from evafem.kernels import _ckernels
except ImportError:
    _ckernels = None


def build_state(sweeps):
    mesh = l_shape_mesh()
    for _ in range(sweeps):
        mesh, _ = uniform_refine(mesh)
    space = P1Space(mesh)
    rng = np.random.default_rng(0)
    coords = mesh.triangle_coords()
    diff = np.broadcast_to(np.eye(2), (mesh.n_triangles, 2, 2)).copy()
    full = np.zeros(mesh.n_vertices)
    full[space.dof_vertices] = rng.normal(size=space.dim)
    uq = full[mesh.triangles] @ DEGREE6.points.T
    areas = mesh.areas

    edge_ids = mesh.interior_edge_ids()
    edges = mesh.edges[edge_ids]
    tris = mesh.edge_tris[edge_ids]
    opp = mesh.triangles[tris].sum(axis=2) - edges.sum(axis=1)[:, None]
    vids = np.concatenate([edges, opp], axis=1)
    pts = mesh.vertices[vids]
    uvals = full[vids]
    pdiff = diff[tris]
    fq = np.ones((len(edge_ids), 4, DEGREE6.n_points))
    return {
        "mesh": mesh,
        "coords": coords,
        "diff": diff,
        "areas": areas,
        "uq": uq,
        "pts": pts,
        "uvals": uvals,
        "pdiff": pdiff,
        "fq": fq,
    }


def timeit(fn, repeats):
    best = np.inf
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def relative_gap(a, b):
    if not isinstance(a, tuple):
        a, b = (a,), (b,)
    out = 0.0
    for x, y in zip(a, b):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        scale = max(float(np.max(np.abs(x))), 1.0)
        out = max(out, float(np.max(np.abs(x - y))) / scale)
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sweeps", type=int, default=9,
                        help="uniform refinements of the L-shape (9 -> ~1.5M elements)")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    state = build_state(args.sweeps)
    mesh = state["mesh"]
    w, lam = DEGREE6.weights, DEGREE6.points
    kind, c = 1, 0.0  # cubic reaction

    print(f"mesh: {mesh.n_triangles} triangles, {len(state['pts'])} interior edges")
    if _ckernels is None:
        print("compiled kernels not built; showing the numpy backend only")

    cases = [
        ("stiffness_entries",
         lambda m: m.stiffness_entries(state["coords"], state["diff"])),
        ("reaction_energy",
         lambda m: m.reaction_energy(state["areas"], state["uq"], w, kind, c)),
        ("reaction_gradient",
         lambda m: m.reaction_gradient(state["areas"], state["uq"], w, lam, kind, c)),
        ("reaction_moments",
         lambda m: m.reaction_moments(state["areas"], state["uq"], w, kind, c)),
        ("edge_patch_entries",
         lambda m: m.edge_patch_entries(state["pts"], state["uvals"], state["pdiff"],
                                        state["fq"], w, lam, kind, c)),
    ]

    header = f"{'kernel':22s} {'numpy [ms]':>12s} {'compiled [ms]':>14s} {'speedup':>9s} {'max gap':>10s}"
    print(header)
    print("-" * len(header))
    for name, call in cases:
        t_py, r_py = timeit(lambda: call(numpy_backend), args.repeats)
        if _ckernels is None:
            print(f"{name:22s} {1e3 * t_py:12.2f} {'-':>14s} {'-':>9s} {'-':>10s}")
            continue
        t_c, r_c = timeit(lambda: call(_ckernels), args.repeats)
        gap = relative_gap(r_py, r_c)
        print(f"{name:22s} {1e3 * t_py:12.2f} {1e3 * t_c:14.2f} {t_py / t_c:8.1f}x {gap:10.1e}")


if __name__ == "__main__":
    main()
