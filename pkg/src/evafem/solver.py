"""Instrumented conjugate gradient solvers.

Both the linear (optionally diagonally preconditioned) CG and the
Polak-Ribiere nonlinear CG record the energy of every iterate, so the
stopping rules can work on energy differences alone.  For linear CG the
squared operator-norm of each update is recorded as well; by exact line
minimization it equals twice the per-step energy drop, which is the
identity the lookahead error estimate is built on.
"""

import warnings

import numpy as np
from scipy.optimize import line_search

from evafem.assembly import DiscreteEnergy


class SolverError(RuntimeError):
    pass


class Preconditioner:
    """Identity or positive diagonal scaling."""

    def __init__(self, kind="identity", diag=None):
        if kind not in ("identity", "diagonal"):
            raise ValueError(f"unknown preconditioner kind {kind!r}")
        if kind == "diagonal":
            diag = np.asarray(diag, dtype=float)
            if diag.ndim != 1 or np.any(diag <= 0.0):
                raise ValueError("diagonal preconditioner needs positive entries")
        self.kind = kind
        self.diag = diag

    @staticmethod
    def from_matrix(matrix, kind="diagonal"):
        if kind == "identity":
            return Preconditioner("identity")
        return Preconditioner("diagonal", matrix.diagonal())

    def apply(self, r):
        if self.kind == "identity":
            return r.copy()
        return r / self.diag


class SolverTrace:
    """Per-iteration record a stopping rule consumes.

    ``energies[k]`` is the energy of the k-th iterate, ``grad_inf[k]`` the
    sup-norm of the discrete gradient there, and ``update_norms_sq[k-1]``
    (linear CG only) the squared operator-norm of the k-th update.  A
    window of recent iterates is retained so that a lookahead criterion
    can return an earlier iterate than the last one computed.
    """

    def __init__(self):
        self.energies = []
        self.update_norms_sq = []
        self.grad_inf = []
        self._kept = {}
        self.stopped_at = None
        self.total_iterations = 0
        self.final_delay = None
        self.stop_reason = ""

    @property
    def n(self):
        return len(self.energies) - 1

    def energy(self, k):
        return self.energies[k]

    def hs(self, n, d):
        """Lookahead error estimate 2 (E(u^n) - E(u^(n+d)))."""
        if d < 1 or n < 0:
            raise ValueError("need n >= 0 and d >= 1")
        if n + d > self.n:
            raise ValueError(f"trace holds {self.n} iterations, need {n + d}")
        return 2.0 * (self.energies[n] - self.energies[n + d])

    def record(self, energy, iterate, grad_inf=np.nan, update_norm_sq=None):
        self.energies.append(float(energy))
        self.grad_inf.append(float(grad_inf))
        if update_norm_sq is not None:
            self.update_norms_sq.append(float(update_norm_sq))
        self._kept[self.n] = iterate

    def iterate(self, k):
        return self._kept[k]

    def drop_before(self, k):
        if k is None:
            k = self.n
        for idx in [i for i in self._kept if i < k]:
            del self._kept[idx]

    def accumulated_drop(self, n_from=0):
        return self.energies[n_from] - self.energies[-1]


def hs_estimate(trace: SolverTrace, n: int, d: int) -> float:
    """Energy form of the lookahead lower bound on the iteration error."""
    return trace.hs(n, d)


def _finalize(trace, stopper, stopped_at, reason):
    trace.stopped_at = stopped_at
    trace.total_iterations = trace.n
    trace.stop_reason = reason
    if stopper is not None and getattr(stopper, "lookahead", False):
        trace.final_delay = stopper.delay
    return trace


def cg_run(A, b, x0=None, precond=None, stopper=None, max_iter=None, resync_every=50):
    """Conjugate gradients on the SPD system ``A x = b`` with energy
    instrumentation.

    Returns ``(x, trace)`` where ``x`` is the iterate the stopper selected
    (for a lookahead rule this is the n-th iterate even though n+d were
    computed; all performed iterations stay in the count).  Without a
    stopper the run continues to machine convergence or ``max_iter``.
    """
    b = np.asarray(b, dtype=float)
    dim = b.size
    x = np.zeros(dim) if x0 is None else np.array(x0, dtype=float)
    if x.shape != b.shape:
        raise ValueError("initial guess has wrong dimension")
    if max_iter is None:
        max_iter = 10 * dim
    precond = precond or Preconditioner("identity")

    def full_energy(v):
        return 0.5 * float(v @ (A @ v)) - float(b @ v)

    trace = SolverTrace()
    r = b - A @ x
    z = precond.apply(r)
    rz = float(r @ z)
    p = z.copy()
    energy = full_energy(x)
    trace.record(energy, x.copy(), grad_inf=float(np.max(np.abs(r))) if dim else 0.0)

    while True:
        if stopper is not None:
            hit = stopper.check(trace)
            if hit is not None:
                return trace.iterate(hit), _finalize(trace, stopper, hit, "criterion")
        if rz < 0.0:
            raise SolverError("preconditioner is not positive definite")
        if rz == 0.0:
            return x, _finalize(trace, stopper, trace.n, "machine_precision")
        if trace.n >= max_iter:
            if stopper is None:
                return x, _finalize(trace, stopper, trace.n, "max_iter")
            raise SolverError(
                f"no stop after {trace.n} iterations (dim {dim}, criterion never satisfied)"
            )
        Ap = A @ p
        pAp = float(p @ Ap)
        if not np.isfinite(pAp) or pAp <= 0.0:
            raise SolverError(f"operator lost positive definiteness: p.Ap = {pAp!r}")
        alpha = rz / pAp
        if not np.isfinite(alpha):
            raise SolverError(f"non-finite step length {alpha!r}")
        x = x + alpha * p
        step_sq = alpha * alpha * pAp  # |x_k+1 - x_k|_A^2 = 2 * energy drop
        energy -= 0.5 * step_sq
        if resync_every and (trace.n + 1) % resync_every == 0:
            energy = full_energy(x)
        r = r - alpha * Ap
        z = precond.apply(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        trace.record(energy, x.copy(), grad_inf=float(np.max(np.abs(r))),
                     update_norm_sq=step_sq)
        if stopper is not None:
            trace.drop_before(stopper.keep_from)


def pcg_transform_consistency(A, b, precond: Preconditioner, x0=None, n_steps=None):
    """Check that diagonal preconditioning is a plain change of variables.

    Runs the preconditioned iteration on ``A`` and the unpreconditioned one
    on the symmetrically scaled system; returns the two energy sequences
    and their maximum relative discrepancy (zero up to rounding).
    """
    b = np.asarray(b, dtype=float)
    dim = b.size
    x0 = np.zeros(dim) if x0 is None else np.asarray(x0, dtype=float)
    n_steps = dim if n_steps is None else n_steps

    _, trace_pcg = cg_run(A, b, x0=x0, precond=precond, max_iter=n_steps)

    if precond.kind == "identity":
        scale = np.ones(dim)
    else:
        scale = 1.0 / np.sqrt(precond.diag)
    A_hat = (A * scale[None, :]) * scale[:, None] if isinstance(A, np.ndarray) else None
    if A_hat is None:
        import scipy.sparse as sp

        D = sp.diags(scale)
        A_hat = (D @ A @ D).tocsr()
    b_hat = scale * b
    x0_hat = x0 / scale
    _, trace_plain = cg_run(A_hat, b_hat, x0=x0_hat, max_iter=n_steps)

    e1 = np.asarray(trace_pcg.energies)
    e2 = np.asarray(trace_plain.energies)
    m = min(len(e1), len(e2))
    scale = np.maximum(np.abs(e1[:m]), 1.0)
    discrepancy = float(np.max(np.abs(e1[:m] - e2[:m]) / scale))
    return trace_pcg, trace_plain, discrepancy


def _backtrack(value, x, direction, fx, slope, c1, max_halvings=60):
    alpha = 1.0
    for _ in range(max_halvings):
        f_trial = value(x + alpha * direction)
        if f_trial <= fx + c1 * alpha * slope:
            return alpha, f_trial
        alpha *= 0.5
    return None, None


class _GradCache:
    """Memoize the most recent gradient; the line search evaluates the
    gradient at the accepted point, so the outer loop can reuse it."""

    def __init__(self, grad):
        self._grad = grad
        self._key = None
        self._value = None
        self.evaluations = 0

    def __call__(self, x):
        key = x.tobytes()
        if key != self._key:
            self._value = self._grad(x)
            self._key = key
            self.evaluations += 1
        return self._value


def ncg_minimize(value, grad, x0, stopper=None, max_iter=None, c1=1e-4, c2=0.1,
                 restart_every=None, ls_maxiter=40):
    """Polak-Ribiere-plus nonlinear CG with a strong Wolfe line search.

    The direction is restarted to steepest descent whenever the PR
    coefficient clips to zero, on schedule every ``restart_every``
    iterations (default: the problem dimension), and whenever the computed
    direction fails to be a descent direction.
    """
    x = np.array(x0, dtype=float)
    dim = x.size
    if restart_every is None:
        restart_every = max(dim, 1)
    if max_iter is None:
        max_iter = max(1000, 10 * dim)
    c1 = min(c1, 0.5 * c2)  # the Wolfe conditions need 0 < c1 < c2 < 1
    grad = _GradCache(grad)

    fx = value(x)
    gx = grad(x)
    trace = SolverTrace()
    trace.record(fx, x.copy(), grad_inf=float(np.max(np.abs(gx))) if dim else 0.0)
    direction = -gx
    since_restart = 0
    old_old_fval = None
    no_progress = 0  # consecutive iterations without strict energy decrease

    while True:
        if stopper is not None:
            hit = stopper.check(trace)
            if hit is not None:
                return trace.iterate(hit), _finalize(trace, stopper, hit, "criterion")
        g_inf = float(np.max(np.abs(gx))) if dim else 0.0
        if g_inf == 0.0:
            return x, _finalize(trace, stopper, trace.n, "stationary")
        if trace.n >= max_iter:
            if stopper is None:
                return x, _finalize(trace, stopper, trace.n, "max_iter")
            raise SolverError(f"no stop after {trace.n} nonlinear CG iterations")

        slope = float(gx @ direction)
        if slope >= 0.0:
            direction = -gx
            since_restart = 0
            slope = -float(gx @ gx)

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            alpha, _, _, f_new, _, _ = line_search(
                value, grad, x, direction, gfk=gx, old_fval=fx,
                old_old_fval=old_old_fval, c1=c1, c2=c2, maxiter=ls_maxiter,
            )
        stalled = False
        if alpha is None:
            alpha, f_new = _backtrack(value, x, direction, fx, slope, c1)
            stalled = alpha is None
        if not stalled:
            x_new = x + alpha * direction
            stalled = np.array_equal(x_new, x)
        if stalled or no_progress >= 30:
            # no resolvable step exists (or the energy has been frozen at
            # floating point resolution for a whole window, e.g. a short
            # cycle of iterates); legitimate only when the gradient already
            # sits at the line search's floating point floor
            if g_inf <= 1e-3 * (1.0 + abs(fx)):
                return x, _finalize(trace, stopper, trace.n, "stationary")
            raise SolverError(
                f"line search failed to reduce the energy (|g|_inf = {g_inf:.3e})"
            )
        old_old_fval = fx
        x = x_new
        if f_new is None:
            f_new = value(x)
        no_progress = 0 if f_new < fx else no_progress + 1
        g_new = grad(x)

        beta = max(0.0, float(g_new @ (g_new - gx)) / float(gx @ gx))
        since_restart += 1
        if beta == 0.0 or since_restart >= restart_every:
            direction = -g_new
            since_restart = 0
        else:
            direction = beta * direction - g_new
        fx, gx = f_new, g_new
        trace.record(fx, x.copy(), grad_inf=float(np.max(np.abs(gx))))
        if stopper is not None:
            trace.drop_before(stopper.keep_from)


def ncg_run(problem, space, x0, stopper=None, system: DiscreteEnergy = None, **kwargs):
    """Nonlinear CG on the discrete energy of ``problem`` over ``space``."""
    if system is None:
        system = DiscreteEnergy(space, problem)
    return ncg_minimize(system.value, system.gradient, x0, stopper=stopper, **kwargs)
