"""Problem catalog: diffusion-reaction energies on polygonal domains.

Each problem bundles the diffusion field, the monotone reaction (phi with
its primitive and derivative, normalized so Phi(0) = 0), the load, an
optional exact solution, a reference value for the squared norm of the
full-space solution in the problem's bilinear form, and the per-criterion
default control parameters of the benchmark runs.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from evafem import kernels, mesh as meshmod


@dataclass(frozen=True)
class Reaction:
    """Monotone reaction phi with primitive Phi (Phi(0)=0) and derivative."""

    kind: str
    code: Optional[int]
    c: float
    phi: Callable
    big_phi: Callable
    dphi: Callable

    @property
    def is_linear(self):
        return self.kind == "linear"

    @staticmethod
    def linear(c: float) -> "Reaction":
        return Reaction(
            "linear", kernels.LINEAR, float(c),
            lambda u: c * u,
            lambda u: 0.5 * c * u * u,
            lambda u: np.full_like(np.asarray(u, dtype=float), c),
        )

    @staticmethod
    def cubic() -> "Reaction":
        return Reaction(
            "cubic", kernels.CUBIC, 0.0,
            lambda u: u ** 3,
            lambda u: 0.25 * u ** 4,
            lambda u: 3.0 * u * u,
        )

    @staticmethod
    def abs_quadratic() -> "Reaction":
        return Reaction(
            "abs-quadratic", kernels.ABS_QUADRATIC, 0.0,
            lambda u: np.abs(u) * u,
            lambda u: np.abs(u) ** 3 / 3.0,
            lambda u: 2.0 * np.abs(u),
        )

    @staticmethod
    def exponential() -> "Reaction":
        return Reaction(
            "exponential", kernels.EXPM1, 0.0,
            np.expm1,
            lambda u: np.expm1(u) - u,
            np.exp,
        )

    @staticmethod
    def custom(phi, big_phi, dphi) -> "Reaction":
        """User-supplied vectorized maps; handled by the generic numpy path."""
        return Reaction("custom", None, 0.0, phi, big_phi, dphi)


def constant_diffusion(matrix):
    matrix = np.asarray(matrix, dtype=float)

    def diffusion(x):
        return np.broadcast_to(matrix, (len(x), 2, 2))

    return diffusion


def constant_load(value):
    def load(x):
        return np.full(x.shape[:-1], float(value))

    return load


@dataclass(frozen=True)
class Problem:
    """One boundary value problem of the benchmark catalog."""

    name: str
    domain: str  # mesh-builder tag: square | lshape | square-interfaces
    diffusion: Callable  # (n, 2) points -> (n, 2, 2) SPD matrices
    reaction: Reaction
    load: Callable  # (n, 2) points -> (n,)
    exact_solution: Optional[Callable] = None
    exact_gradient: Optional[Callable] = None
    ref_value: Optional[float] = None  # |u|^2 in the full bilinear form
    preconditioner: str = "identity"  # identity | diagonal
    description: str = ""
    stopping_defaults: dict = field(default_factory=dict)
    n_max_default: int = 100_000

    @property
    def is_linear(self):
        return self.reaction.is_linear

    def initial_mesh(self) -> meshmod.Mesh:
        if self.domain == "square":
            m = meshmod.unit_square_mesh()
            m, _ = meshmod.uniform_refine(m)  # seed the first interior vertex
            return m
        if self.domain == "lshape":
            return meshmod.l_shape_mesh()
        if self.domain == "square-interfaces":
            return meshmod.tensor_grid_mesh(_INTERFACE_GRID)
        raise ValueError(f"unknown domain tag {self.domain!r}")


# ---------------------------------------------------------------------------
# Singular manufactured solution: u = 2 r^(-4/3) x y (1-x^2)(1-y^2), with
# f = -div grad u + u^3 fixed in closed form (verified against a
# finite-difference Laplacian in the test suite).


def singular_solution(x):
    x = np.asarray(x, dtype=float)
    xs, ys = x[..., 0], x[..., 1]
    r2 = xs * xs + ys * ys
    return 2.0 * r2 ** (-2.0 / 3.0) * xs * ys * (1 - xs ** 2) * (1 - ys ** 2)


def singular_gradient(x):
    x = np.asarray(x, dtype=float)
    xs, ys = x[..., 0], x[..., 1]
    r2 = xs * xs + ys * ys
    g = 2.0 * xs * ys * (1 - xs ** 2) * (1 - ys ** 2)
    gx = 2.0 * ys * (1 - ys ** 2) * (1 - 3 * xs ** 2)
    gy = 2.0 * xs * (1 - xs ** 2) * (1 - 3 * ys ** 2)
    h = r2 ** (-2.0 / 3.0)
    hs = (4.0 / 3.0) * r2 ** (-5.0 / 3.0) * g
    out = np.empty(x.shape)
    out[..., 0] = h * gx - hs * xs
    out[..., 1] = h * gy - hs * ys
    return out


def singular_rhs(x):
    """Closed-form load whose exact solution is :func:`singular_solution`."""
    x = np.asarray(x, dtype=float)
    xs, ys = x[..., 0], x[..., 1]
    r2 = xs * xs + ys * ys
    if np.any(r2 == 0.0):
        raise ValueError("singular load is undefined at the origin")
    xy = xs * ys
    poly = 64.0 - 160.0 * r2 + 256.0 * (xy * xy)
    cube = 2.0 * xy * (1 - xs ** 2) * (1 - ys ** 2)
    return (
        12.0 * xy * (2.0 - r2) * r2 ** (-2.0 / 3.0)
        + (xy / 9.0) * poly * r2 ** (-5.0 / 3.0)
        + cube ** 3 / (r2 * r2)
    )


# ---------------------------------------------------------------------------
# Piecewise diffusion of the interface benchmark

_INTERFACE_GRID = np.array([0.0, 0.1, 0.2, 0.3, 0.4, 0.7, 0.8, 1.0])

_SUBDOMAINS = (
    ((0.1, 0.3), (0.1, 0.2), 10.0),
    ((0.4, 0.7), (0.1, 0.3), 0.1),
    ((0.8, 1.0), (0.7, 1.0), 0.05),
)


def interface_kappa(x):
    x = np.asarray(x, dtype=float)
    kappa = np.ones(x.shape[:-1])
    for (x0, x1), (y0, y1), value in _SUBDOMAINS:
        inside = (
            (x[..., 0] > x0) & (x[..., 0] < x1) & (x[..., 1] > y0) & (x[..., 1] < y1)
        )
        kappa[inside] = value
    return kappa


def interface_diffusion(x):
    kappa = interface_kappa(x)
    out = np.zeros(x.shape[:-1] + (2, 2))
    out[..., 0, 0] = kappa
    out[..., 1, 1] = kappa
    return out


# ---------------------------------------------------------------------------
# Catalog

_IDENTITY = np.eye(2)

# linear benchmark defaults shared by all four linear problems
_LINEAR_COMMON = dict(tau=1.01, d_init=10, delta_d=10, n_batch=2)


def _catalog():
    problems = {}

    def add(p):
        problems[p.name] = p

    nl_tail = dict(alpha_E=0.01, n_min=10, n_batch=5)
    nl_default = dict(g_tol=1e-8, n_min=10)
    nl_relative = dict(alpha_gamma=0.1, n_min=10, tau=1.01, d_init=10, delta_d=5)

    add(Problem(
        name="cubic-lshape",
        domain="lshape",
        diffusion=constant_diffusion(_IDENTITY),
        reaction=Reaction.cubic(),
        load=constant_load(1.0),
        description="cubic reaction, unit load, L-shaped domain",
        stopping_defaults={
            "tail_off": dict(nl_tail),
            "relative": dict(nl_relative),
            "default": dict(nl_default),
        },
        n_max_default=50_000,
    ))

    add(Problem(
        name="absvalue-lshape",
        domain="lshape",
        diffusion=constant_diffusion(_IDENTITY),
        reaction=Reaction.abs_quadratic(),
        load=constant_load(1.0),
        description="|u|u reaction, unit load, L-shaped domain",
        stopping_defaults={
            "tail_off": dict(nl_tail),
            "relative": dict(nl_relative),
            "default": dict(nl_default),
        },
        n_max_default=50_000,
    ))

    add(Problem(
        name="exponential-lshape",
        domain="lshape",
        diffusion=constant_diffusion(_IDENTITY),
        reaction=Reaction.exponential(),
        load=constant_load(1.0),
        description="exp(u)-1 reaction, unit load, L-shaped domain",
        stopping_defaults={
            "tail_off": dict(nl_tail),
            "relative": dict(alpha_gamma=0.01, n_min=10, tau=1.001, d_init=50, delta_d=5),
            "default": dict(nl_default),
        },
        n_max_default=50_000,
    ))

    add(Problem(
        name="singular-lshape",
        domain="lshape",
        diffusion=constant_diffusion(_IDENTITY),
        reaction=Reaction.cubic(),
        load=singular_rhs,
        exact_solution=singular_solution,
        exact_gradient=singular_gradient,
        description="cubic reaction, manufactured singular solution, L-shape",
        stopping_defaults={
            "tail_off": dict(nl_tail),
            "relative": dict(nl_relative),
            "default": dict(nl_default),
        },
        n_max_default=50_000,
    ))

    add(Problem(
        name="anisotropic-square",
        domain="square",
        diffusion=constant_diffusion(np.diag([1.0, 1e-2])),
        reaction=Reaction.linear(1.0),
        load=constant_load(1.0),
        ref_value=0.07121857719182778,
        description="anisotropic diffusion diag(1, 1e-2), unit reaction, unit square",
        stopping_defaults={
            "tail_off": dict(alpha_E=0.1, n_min=10, **_LINEAR_COMMON),
            "relative": dict(alpha_gamma=0.1, n_min=10, **_LINEAR_COMMON),
            "default": dict(g_tol=1e-8, n_min=10),
        },
    ))

    add(Problem(
        name="smalldiffusion-square",
        domain="square",
        diffusion=constant_diffusion(1e-2 * _IDENTITY),
        reaction=Reaction.linear(1.0),
        load=constant_load(1.0),
        ref_value=0.6509451171871544,
        description="small isotropic diffusion 1e-2, unit reaction, unit square",
        stopping_defaults={
            "tail_off": dict(alpha_E=0.1, n_min=10, **_LINEAR_COMMON),
            "relative": dict(alpha_gamma=0.1, n_min=5, **_LINEAR_COMMON),
            "default": dict(g_tol=1e-8, n_min=10),
        },
    ))

    add(Problem(
        name="interfaces-square",
        domain="square-interfaces",
        diffusion=interface_diffusion,
        reaction=Reaction.linear(1.0),
        load=constant_load(1.0),
        ref_value=0.04076358619422494,
        preconditioner="diagonal",
        description="piecewise diffusion with three inclusions, unit square",
        stopping_defaults={
            "tail_off": dict(alpha_E=0.1, n_min=5, **_LINEAR_COMMON),
            "relative": dict(alpha_gamma=0.1, n_min=5, **_LINEAR_COMMON),
            "default": dict(g_tol=1e-8, n_min=5),
        },
    ))

    add(Problem(
        name="laplace-lshape",
        domain="lshape",
        diffusion=constant_diffusion(_IDENTITY),
        reaction=Reaction.linear(0.0),
        load=constant_load(1.0),
        ref_value=0.214075802220546,
        description="Laplace with unit load on the L-shaped domain",
        stopping_defaults={
            "tail_off": dict(alpha_E=0.1, n_min=10, **_LINEAR_COMMON),
            "relative": dict(alpha_gamma=0.01, n_min=10, **_LINEAR_COMMON),
            "default": dict(g_tol=1e-8, n_min=10),
        },
        n_max_default=200_000,
    ))

    return problems


_CATALOG = _catalog()


def list_problems():
    return sorted(_CATALOG)


def get_problem(name: str) -> Problem:
    try:
        return _CATALOG[name]
    except KeyError:
        known = ", ".join(list_problems())
        raise KeyError(f"unknown problem {name!r}; available: {known}") from None
