"""Energy-driven adaptive P1 finite elements.

Fully iterative minimization of convex diffusion-reaction energies:
conjugate gradient solvers instrumented with per-iteration energies,
energy-based stopping rules, edge-bisection refinement indicators with
minimal-cardinality bulk marking, and newest-vertex bisection.
"""

from evafem.mesh import Mesh, P1Space, Prolongation, build_mesh, prolong, refine_nvb
from evafem.problems import Problem, Reaction, get_problem, list_problems
from evafem.driver import DriverConfig, make_config, run

__all__ = [
    "Mesh",
    "P1Space",
    "Prolongation",
    "build_mesh",
    "refine_nvb",
    "prolong",
    "Problem",
    "Reaction",
    "get_problem",
    "list_problems",
    "DriverConfig",
    "make_config",
    "run",
]

__version__ = "0.1.0"
