"""The adaptive loop: solve, indicate, mark, refine, warm-start.

Each pass solves on the current space with the configured criterion,
computes edge decays from the final iterate, bulk-marks, refines by
newest-vertex bisection, and interpolates the final iterate onto the
refined mesh as the next initial guess.  Stopping state (in particular
the lookahead delay) is reset on every mesh.
"""

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse.linalg as sla

from evafem import svgplot
from evafem.adaptivity import compute_indicators, doerfler_mark
from evafem.assembly import DiscreteEnergy, exact_error_norm_sq
from evafem.mesh import P1Space, prolong, refine_nvb, uniform_refine, write_ascii_tri
from evafem.problems import Problem, get_problem
from evafem.solver import Preconditioner, SolverError, cg_run, ncg_run
from evafem.stopping import StoppingConfig, make_stopper


class DriverError(RuntimeError):
    pass


def _resolve_problem(which) -> Problem:
    if isinstance(which, Problem):
        return which
    return get_problem(which)


@dataclass
class ConvergenceRecord:
    step: int
    ndof: int
    energy: float
    iters: int
    delay: Optional[int] = None
    err_total_sq: Optional[float] = None
    err_iter_sq: Optional[float] = None
    err_exact_sq: Optional[float] = None
    wall_s: Optional[float] = None
    mesh: object = None  # retained only when snapshots are requested


@dataclass
class DriverConfig:
    problem: str
    criterion: str = "tail_off"
    theta: float = 0.5
    n_max: Optional[int] = None          # DOF cap; catalog default when None
    stopping: Optional[StoppingConfig] = None
    rel_energy_stop: Optional[float] = None
    diagnostics: bool = False            # tight-CG iteration-error oracle
    timing: bool = False                 # record wall-clock seconds per step
    snapshots: bool = False
    seed_sweeps: int = 3
    init_rounds: Optional[int] = None    # nonlinear warm-up rounds (default 1)
    ref_value: Optional[float] = None    # overrides the catalog reference
    self_reference: bool = False         # deeper run supplies the reference
    solver_max_iter: Optional[int] = None  # per-mesh cap (default 10 * dim)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise DriverError("theta must lie in (0, 1)")
        if self.seed_sweeps < 0:
            raise DriverError("seed_sweeps must be >= 0")


def make_config(problem_name, criterion, **overrides) -> DriverConfig:
    """Configuration with the catalog's per-criterion control parameters,
    selectively overridden by keyword arguments."""
    problem = _resolve_problem(problem_name)
    if criterion not in ("tail_off", "relative", "default"):
        raise DriverError(f"unknown criterion {criterion!r}")
    params = dict(problem.stopping_defaults.get(criterion, {}))
    for key in ("alpha_E", "alpha_gamma", "n_min", "n_batch", "d_init", "delta_d",
                "tau", "g_tol"):
        if key in overrides:
            params[key] = overrides.pop(key)
    params.setdefault("abs_variant", not problem.is_linear)
    stopping = StoppingConfig(kind=criterion, **params)
    overrides.setdefault("n_max", problem.n_max_default)
    return DriverConfig(problem=problem_name, criterion=criterion,
                        stopping=stopping, **overrides)


class RunResult(list):
    """Sequence of convergence records plus run-level metadata."""

    def __init__(self, records=(), problem="", criterion="",
                 reference_kind=None, reference_value=None):
        super().__init__(records)
        self.problem = problem
        self.criterion = criterion
        self.reference_kind = reference_kind
        self.reference_value = reference_value


def _solve_once(problem, space, system, x0, stopping, max_iter=None):
    stopper = make_stopper(stopping, space.dim)
    if problem.is_linear:
        operator = system.full_matrix
        precond = None
        if problem.preconditioner == "diagonal":
            precond = Preconditioner.from_matrix(operator)
        return cg_run(operator, system.load_vector, x0=x0, precond=precond,
                      stopper=stopper, max_iter=max_iter)
    return ncg_run(problem, space, x0, stopper=stopper, system=system,
                   max_iter=max_iter)


def iteration_error_oracle(A, b, u_star, rtol=1e-12, precond=None):
    """Squared iteration error in the operator norm, |u_h - u*|^2_A, with
    u_h computed independently to a tight relative residual."""
    M = None
    if precond is not None and precond.kind == "diagonal":
        M = sla.LinearOperator(A.shape, matvec=lambda v: v / precond.diag)
    u_star = np.asarray(u_star, dtype=float)
    u_h, info = sla.cg(A, b, x0=u_star, rtol=rtol, atol=0.0, M=M,
                       maxiter=40 * len(b) + 100)
    if info != 0:
        raise DriverError(f"reference solve did not converge (info={info})")
    d = u_h - u_star
    return float(d @ (A @ d))


def run(config: DriverConfig) -> RunResult:
    """Run the adaptive loop until the DOF cap (or the optional relative
    energy plateau) is reached; one record per solved space."""
    problem = _resolve_problem(config.problem)
    stopping = config.stopping
    if stopping is None:
        stopping = make_config(config.problem, config.criterion).stopping
    n_max = config.n_max if config.n_max is not None else problem.n_max_default

    mesh = problem.initial_mesh()
    for _ in range(config.seed_sweeps):
        mesh, _ = uniform_refine(mesh)
    space = P1Space(mesh)
    if space.dim < 1:
        raise DriverError("seeded mesh has no interior vertices; increase seed_sweeps")
    if space.dim > n_max:
        raise DriverError(
            f"DOF cap {n_max} is below the seeded initial space ({space.dim} DOFs)"
        )
    system = DiscreteEnergy(space, problem)
    x = np.zeros(space.dim)

    # Warm-up protocol for nonlinear problems: a gradient-criterion solve
    # and one adaptive round before the measured records begin.
    init_rounds = config.init_rounds
    if init_rounds is None:
        init_rounds = 0 if problem.is_linear else 1
    for _ in range(init_rounds):
        warm_params = problem.stopping_defaults.get(
            "default", {"g_tol": 1e-8, "n_min": 10}
        )
        warm = StoppingConfig(kind="default", **warm_params)
        x_star, _ = _solve_once(problem, space, system, x, warm,
                                config.solver_max_iter)
        marked = doerfler_mark(
            compute_indicators(space, problem, x_star, system=system), config.theta
        )
        if len(marked) == 0:
            x = x_star
            break
        mesh, prol = refine_nvb(mesh, marked)
        space = P1Space(mesh)
        x = prolong(x_star, prol, space)
        system = DiscreteEnergy(space, problem)
        if space.dim > n_max:
            raise DriverError("warm-up refinement already exceeds the DOF cap")

    ref_value = config.ref_value if config.ref_value is not None else problem.ref_value
    reference_kind = None
    e_ref = None
    if ref_value is not None:
        e_ref = -0.5 * ref_value  # energy of the full-space solution
        reference_kind = "catalog"

    records = []

    def one_step(step):
        nonlocal mesh, space, system, x
        t0 = time.perf_counter()
        x_star, trace = _solve_once(problem, space, system, x, stopping,
                                    config.solver_max_iter)
        energy = trace.energies[trace.stopped_at]
        rec = ConvergenceRecord(
            step=step,
            ndof=space.dim,
            energy=energy,
            iters=trace.total_iterations,
            delay=trace.final_delay,
        )
        if e_ref is not None:
            rec.err_total_sq = 2.0 * (energy - e_ref)
        if config.diagnostics and problem.is_linear:
            precond = None
            if problem.preconditioner == "diagonal":
                precond = Preconditioner.from_matrix(system.full_matrix)
            rec.err_iter_sq = iteration_error_oracle(
                system.full_matrix, system.load_vector, x_star, precond=precond
            )
        if problem.exact_gradient is not None:
            rec.err_exact_sq = exact_error_norm_sq(space, problem, x_star)
        if config.snapshots:
            rec.mesh = mesh

        marked = doerfler_mark(
            compute_indicators(space, problem, x_star, system=system), config.theta
        )
        refined = len(marked) > 0
        if refined:
            mesh, prol = refine_nvb(mesh, marked)
            space = P1Space(mesh)
            x = prolong(x_star, prol, space)
            system = DiscreteEnergy(space, problem)
        if config.timing:
            rec.wall_s = time.perf_counter() - t0
        return rec, refined

    step = 0
    try:
        while space.dim <= n_max:
            rec, refined = one_step(step)
            records.append(rec)
            step += 1
            if not refined:
                break
            if (config.rel_energy_stop is not None and len(records) >= 2
                    and records[-2].energy != 0.0):
                drop = abs(records[-1].energy - records[-2].energy)
                if drop < config.rel_energy_stop * abs(records[-2].energy):
                    break
    except SolverError as err:
        raise DriverError(f"solver aborted at step {step}: {err}") from err

    if config.self_reference and e_ref is None and records:
        deep_energy = records[-1].energy
        for _ in range(2):
            rec, refined = one_step(-1)
            deep_energy = rec.energy
            if not refined:
                break
        e_ref = deep_energy
        reference_kind = "self-reference"
        for rec in records:
            rec.err_total_sq = 2.0 * (rec.energy - e_ref)

    result = RunResult(records, problem=problem.name, criterion=stopping.kind,
                       reference_kind=reference_kind,
                       reference_value=ref_value if reference_kind == "catalog" else e_ref)
    return result


# ---------------------------------------------------------------------------
# Outputs

_CSV_HEADER = "step,ndof,energy,iters,delay,err_total_sq,err_iter_sq,err_exact_sq,wall_s"


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def render_csv(records) -> str:
    lines = [_CSV_HEADER]
    for r in records:
        lines.append(",".join([
            _cell(r.step), _cell(r.ndof), _cell(r.energy), _cell(r.iters),
            _cell(r.delay), _cell(r.err_total_sq), _cell(r.err_iter_sq),
            _cell(r.err_exact_sq), _cell(r.wall_s),
        ]))
    return "\n".join(lines) + "\n"


def emit_outputs(records, config: DriverConfig, out_dir, plot=True):
    """Write convergence CSV, an optional log-log SVG with an O(1/n) guide
    line, optional mesh snapshots, and a reference note."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = f"{_resolve_problem(config.problem).name}_{config.criterion}"
    csv_path = out / f"{base}.csv"
    csv_path.write_text(render_csv(records))
    written = [csv_path]

    if plot:
        series = []
        xs = [r.ndof for r in records]
        if any(r.err_total_sq is not None and r.err_total_sq > 0 for r in records):
            series.append(("total error^2", xs,
                           [r.err_total_sq or float("nan") for r in records]))
        if any(r.err_iter_sq for r in records):
            series.append(("iteration error^2", xs,
                           [r.err_iter_sq or float("nan") for r in records]))
        if any(r.err_exact_sq for r in records):
            series.append(("exact error^2", xs,
                           [r.err_exact_sq or float("nan") for r in records]))
        if series:
            svg_path = out / f"{base}.svg"
            svgplot.loglog_svg(svg_path, series, guide_slope=-1.0, title=base)
            written.append(svg_path)

    if config.snapshots:
        for r in records:
            if r.mesh is not None:
                snap = out / f"{base}_step{r.step:03d}.tri"
                write_ascii_tri(r.mesh, snap)
                written.append(snap)

    if isinstance(records, RunResult) and records.reference_kind is not None:
        note = out / f"{base}_reference.txt"
        note.write_text(
            f"kind: {records.reference_kind}\nvalue: {records.reference_value!r}\n"
        )
        written.append(note)
    return written
