"""Energy-based stopping rules for the iterative solvers.

Three criteria operate on solver traces: the energy tail-off test (the
per-step energy drop falls below an averaged fraction of the accumulated
drop), the relative energy reduction test over a lookahead window of
``d`` iterations with an adaptively grown delay, and the plain gradient
sup-norm test.  All decisions are pure functions of the trace and the
configuration; the stopper classes add the bookkeeping the solvers need
(evaluation points, lookahead windows, which iterates to retain).
"""

from dataclasses import dataclass


@dataclass
class StoppingConfig:
    kind: str = "tail_off"  # tail_off | relative | default
    alpha_E: float = 0.1
    alpha_gamma: float = 0.1
    n_min: int = 0
    n_batch: int = 1
    d_init: int = 1
    delta_d: int = 1
    tau: float = 1.01
    g_tol: float = 0.0
    abs_variant: bool = True

    def __post_init__(self):
        if self.kind not in ("tail_off", "relative", "default"):
            raise ValueError(f"unknown stopping criterion {self.kind!r}")
        if not 0.0 < self.alpha_E <= 1.0:
            raise ValueError("alpha_E must lie in (0, 1]")
        if not 0.0 < self.alpha_gamma <= 1.0:
            raise ValueError("alpha_gamma must lie in (0, 1]")
        if self.n_min < 0:
            raise ValueError("n_min must be >= 0")
        if self.n_batch < 1:
            raise ValueError("n_batch must be >= 1")
        if self.d_init < 1:
            raise ValueError("d_init must be >= 1")
        if self.delta_d < 1:
            raise ValueError("delta_d must be >= 1")
        if self.tau <= 1.0:
            raise ValueError("tau must be > 1")
        if self.g_tol < 0.0:
            raise ValueError("g_tol must be >= 0")


@dataclass(frozen=True)
class DelayState:
    """Current lookahead delay; grows within a mesh, reset on refinement."""

    d: int
    last_xi: float = float("nan")


def tail_off_should_stop(trace, cfg: StoppingConfig) -> bool:
    """Stop when the last energy drop falls below the averaged accumulated
    drop since iteration ``n_min``, scaled by ``alpha_E``.

    Evaluate only at n > n_min with (n - n_min) divisible by n_batch; exact
    equality means continue (strict inequality).
    """
    n = trace.n
    drop = trace.energy(n - 1) - trace.energy(n)
    accumulated = trace.energy(cfg.n_min) - trace.energy(n)
    return drop < cfg.alpha_E * accumulated / (n - cfg.n_min)


def delay_update(state: DelayState, trace, cfg: StoppingConfig, n: int):
    """One growth check of the delay at evaluation point ``n``.

    Returns ``(state, status)`` with status ``"insufficient"`` when the
    trace is too short for the current delay (the solver must iterate
    further), ``"grew"`` when the lookahead energy drop is still rising
    (strictly, by a factor above tau), or ``"settled"``.
    """
    if trace.n < n + state.d + 1:
        return state, "insufficient"
    xi_n = trace.hs(n, state.d)
    xi_next = trace.hs(n + 1, state.d)
    if xi_next > cfg.tau * xi_n:
        return DelayState(state.d + cfg.delta_d, xi_n), "grew"
    return DelayState(state.d, xi_n), "settled"


def relative_reduction_should_stop(trace, state: DelayState, cfg: StoppingConfig,
                                   dim: int, n: int) -> bool:
    """Stop when the d-step energy change at iterate ``n`` is small relative
    to |E| scaled by alpha_gamma / dim (absolute-value variant), or, in the
    signed form, when E(n) - E(n+d) <= -(alpha_gamma/dim) E(n)."""
    if dim <= 0:
        raise ValueError("space has no interior degrees of freedom")
    e_n = trace.energy(n)
    e_ahead = trace.energy(n + state.d)
    threshold = cfg.alpha_gamma / dim
    if cfg.abs_variant:
        return abs(e_n - e_ahead) <= threshold * abs(e_n)
    return (e_n - e_ahead) <= -threshold * e_n


def default_should_stop(grad_inf_norm: float, cfg: StoppingConfig) -> bool:
    """Plain gradient test: sup-norm of the discrete gradient <= g_tol."""
    return grad_inf_norm <= cfg.g_tol


# ---------------------------------------------------------------------------
# Stateful drivers consumed by the solvers


class TailOffStopper:
    lookahead = False

    def __init__(self, cfg: StoppingConfig):
        self.cfg = cfg

    @property
    def keep_from(self):
        return None  # only the newest iterate is ever returned

    def check(self, trace):
        n = trace.n
        cfg = self.cfg
        if n <= cfg.n_min or (n - cfg.n_min) % cfg.n_batch != 0:
            return None
        if tail_off_should_stop(trace, cfg):
            return n
        return None


class GradientStopper:
    """Gradient sup-norm test; evaluated from iterate n_min on (the test
    needs no energy difference, so the initial iterate may already pass)."""

    lookahead = False

    def __init__(self, cfg: StoppingConfig):
        self.cfg = cfg

    @property
    def keep_from(self):
        return None

    def check(self, trace):
        n = trace.n
        if n < self.cfg.n_min:
            return None
        if default_should_stop(trace.grad_inf[n], self.cfg):
            return n
        return None


class RelativeReductionStopper:
    """Lookahead criterion: tests iterate n against iterate n+d.

    The delay d starts at d_init, grows by delta_d while the windowed
    energy drop keeps increasing, and the convergence test runs only once
    that growth condition fails.  On a stop at n, the solver has advanced
    to at least n + d + 1 iterations; those extra steps stay in the
    iteration count, but the returned iterate is the n-th one.
    """

    lookahead = True

    def __init__(self, cfg: StoppingConfig, dim: int):
        self.cfg = cfg
        self.dim = dim
        self.state = DelayState(cfg.d_init)
        self.n_eval = cfg.n_min + cfg.n_batch

    @property
    def keep_from(self):
        return self.n_eval

    @property
    def delay(self):
        return self.state.d

    def check(self, trace):
        cfg = self.cfg
        while True:
            self.state, status = delay_update(self.state, trace, cfg, self.n_eval)
            if status == "insufficient":
                return None
            if status == "grew":
                continue
            if relative_reduction_should_stop(trace, self.state, cfg, self.dim, self.n_eval):
                return self.n_eval
            self.n_eval += cfg.n_batch


def make_stopper(cfg: StoppingConfig, dim: int):
    if cfg.kind == "tail_off":
        return TailOffStopper(cfg)
    if cfg.kind == "relative":
        return RelativeReductionStopper(cfg, dim)
    if cfg.kind == "default":
        return GradientStopper(cfg)
    raise ValueError(f"unknown stopping criterion {cfg.kind!r}")
