import numpy as np
import pytest

from evafem.solver import SolverTrace
from evafem.stopping import (
    DelayState,
    StoppingConfig,
    default_should_stop,
    delay_update,
    make_stopper,
    relative_reduction_should_stop,
    tail_off_should_stop,
)


def trace_from(energies, grad_inf=None):
    trace = SolverTrace()
    for k, e in enumerate(energies):
        g = grad_inf[k] if grad_inf is not None else np.nan
        trace.record(e, np.zeros(1), grad_inf=g)
    return trace


class TestConfigValidation:
    def test_ranges_enforced(self):
        with pytest.raises(ValueError):
            StoppingConfig(kind="nope")
        with pytest.raises(ValueError):
            StoppingConfig(alpha_E=0.0)
        with pytest.raises(ValueError):
            StoppingConfig(alpha_E=1.5)
        with pytest.raises(ValueError):
            StoppingConfig(alpha_gamma=0.0)
        with pytest.raises(ValueError):
            StoppingConfig(n_min=-1)
        with pytest.raises(ValueError):
            StoppingConfig(n_batch=0)
        with pytest.raises(ValueError):
            StoppingConfig(d_init=0)
        with pytest.raises(ValueError):
            StoppingConfig(delta_d=0)
        with pytest.raises(ValueError):
            StoppingConfig(tau=1.0)
        with pytest.raises(ValueError):
            StoppingConfig(g_tol=-1e-9)


class TestTailOff:
    def test_worked_example(self):
        cfg = StoppingConfig(kind="tail_off", alpha_E=0.1, n_min=0, n_batch=1)
        # n = 1: drop 0.5 vs threshold 0.05 -> continue
        assert not tail_off_should_stop(trace_from([1.0, 0.5]), cfg)
        # n = 2: drop 0.01 vs threshold 0.1 * 0.51 / 2 = 0.0255 -> stop
        assert tail_off_should_stop(trace_from([1.0, 0.5, 0.49]), cfg)

    def test_stationary_energies_tie_continues(self):
        # zero decay, zero accumulated decay: strict "<" fails
        cfg = StoppingConfig(kind="tail_off", alpha_E=0.5, n_min=0)
        assert not tail_off_should_stop(trace_from([1.0, 1.0, 1.0]), cfg)

    def test_geometric_decay_first_stop(self):
        # E_n = rho^n with rho = 0.5 and alpha_E = 1: the inequality
        # rho^(n-1) (1 - rho) < (1 - rho^n)/n first holds at n = 2
        # (n = 1 is an exact tie, which continues)
        cfg = StoppingConfig(kind="tail_off", alpha_E=1.0, n_min=0)
        assert not tail_off_should_stop(trace_from([1.0, 0.5]), cfg)
        assert tail_off_should_stop(trace_from([1.0, 0.5, 0.25]), cfg)
        assert tail_off_should_stop(trace_from([1.0, 0.5, 0.25, 0.125]), cfg)

    def test_accumulation_measured_from_n_min(self):
        cfg = StoppingConfig(kind="tail_off", alpha_E=0.5, n_min=2)
        # big early drops are ignored: accumulation starts at n = 2
        energies = [100.0, 1.0, 0.9, 0.889]
        # n = 3: drop 0.011 vs 0.5 * (0.9 - 0.889) / 1 = 0.0055 -> continue
        assert not tail_off_should_stop(trace_from(energies), cfg)
        energies = [100.0, 1.0, 0.9, 0.8999]
        # n = 3: drop 0.0001 vs 0.5 * 0.0001 -> continue (equal? no: 5e-5) ->
        # 1e-4 < 5e-5 is false -> continue
        assert not tail_off_should_stop(trace_from(energies), cfg)
        energies = [100.0, 1.0, 0.9, 0.85, 0.8499]
        # n = 4: drop 1e-4 vs 0.5 * (0.9 - 0.8499) / 2 = 0.012525 -> stop
        assert tail_off_should_stop(trace_from(energies), cfg)

    def test_stopper_respects_n_min_and_batches(self):
        energies = [1.0, 0.1, 0.0999, 0.09989, 0.099889]
        cfg = StoppingConfig(kind="tail_off", alpha_E=0.9, n_min=1, n_batch=2)
        stopper = make_stopper(cfg, 10)
        # would stop at n = 2 with n_batch 1, but evaluation points are 3, 5...
        assert stopper.check(trace_from(energies[:2])) is None   # n = 1 = n_min
        assert stopper.check(trace_from(energies[:3])) is None   # n = 2 not aligned
        assert stopper.check(trace_from(energies[:4])) == 3

    def test_purity_only_energies_matter(self):
        cfg = StoppingConfig(kind="tail_off", alpha_E=0.1, n_min=0)
        t1 = trace_from([1.0, 0.5, 0.49])
        t2 = trace_from([1.0, 0.5, 0.49], grad_inf=[5.0, 4.0, 3.0])
        t2.update_norms_sq = [123.0, 456.0]
        assert tail_off_should_stop(t1, cfg) == tail_off_should_stop(t2, cfg)


class TestDelay:
    def test_growth_example(self):
        cfg = StoppingConfig(kind="relative", tau=1.01, d_init=1, delta_d=2)
        # xi at n: 2*(E[n] - E[n+1]); construct energies with rising xi
        energies = [1.0, 0.5, -0.01]
        # xi_0^1 = 1.0, xi_1^1 = 1.02
        trace = trace_from(energies)
        state, status = delay_update(DelayState(1), trace, cfg, n=0)
        assert status == "grew"
        assert state.d == 3
        assert state.last_xi == pytest.approx(1.0)

    def test_equal_xi_does_not_grow(self):
        cfg = StoppingConfig(kind="relative", tau=1.01, d_init=1, delta_d=2)
        energies = [1.0, 0.5, 0.0]  # xi_0^1 = xi_1^1 = 1.0
        state, status = delay_update(DelayState(1), trace_from(energies), cfg, n=0)
        assert status == "settled"
        assert state.d == 1

    def test_monotone_decreasing_xi_never_grows(self):
        cfg = StoppingConfig(kind="relative", tau=1.01, d_init=1, delta_d=1)
        energies = [2.0 ** -k for k in range(12)]
        trace = trace_from(energies)
        state = DelayState(1)
        for n in range(10):
            state, status = delay_update(state, trace, cfg, n=n)
            assert status == "settled"
        assert state.d == 1

    def test_insufficient_trace_signals(self):
        cfg = StoppingConfig(kind="relative", d_init=5)
        state, status = delay_update(DelayState(5), trace_from([1.0, 0.5]), cfg, n=0)
        assert status == "insufficient"
        assert state.d == 5

    def test_delay_nondecreasing_within_a_run(self):
        # feed a noisy energy sequence through the full stopper and track d
        rng = np.random.default_rng(9)
        cfg = StoppingConfig(kind="relative", alpha_gamma=0.01, n_min=2, n_batch=1,
                             d_init=2, delta_d=3, tau=1.01, abs_variant=True)
        stopper = make_stopper(cfg, dim=50)
        assert stopper.state.d == cfg.d_init
        trace = SolverTrace()
        e = 1.0
        seen = [stopper.state.d]
        for k in range(200):
            e -= abs(rng.normal()) * 0.5 ** (k // 10)
            trace.record(e, np.zeros(1))
            if stopper.check(trace) is not None:
                break
            seen.append(stopper.state.d)
        assert all(b >= a for a, b in zip(seen, seen[1:]))


class TestRelativeReduction:
    def test_stop_example(self):
        cfg = StoppingConfig(kind="relative", alpha_gamma=0.1, abs_variant=True)
        trace = trace_from([0.0] * 1)  # placeholder energies, overwritten below
        trace.energies = [-1.0, -1.00005]
        assert relative_reduction_should_stop(trace, DelayState(1), cfg, dim=100, n=0)

    def test_converged_tie_stops(self):
        cfg = StoppingConfig(kind="relative", alpha_gamma=0.1, abs_variant=True)
        trace = trace_from([-1.0, -1.0])
        assert relative_reduction_should_stop(trace, DelayState(1), cfg, dim=100, n=0)

    def test_large_change_continues(self):
        cfg = StoppingConfig(kind="relative", alpha_gamma=0.1, abs_variant=True)
        trace = trace_from([-1.0, -1.1])
        assert not relative_reduction_should_stop(trace, DelayState(1), cfg, dim=100, n=0)

    def test_zero_dim_rejected(self):
        cfg = StoppingConfig(kind="relative")
        with pytest.raises(ValueError, match="interior"):
            relative_reduction_should_stop(trace_from([-1.0, -1.0]), DelayState(1), cfg, dim=0, n=0)

    def test_signed_and_abs_agree_for_negative_nonincreasing(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            e_n = -rng.uniform(0.1, 10.0)
            e_ahead = e_n - rng.uniform(0.0, 1.0)  # non-increasing
            dim = int(rng.integers(1, 1000))
            alpha = rng.uniform(1e-3, 1.0)
            c_abs = StoppingConfig(kind="relative", alpha_gamma=alpha, abs_variant=True)
            c_sgn = StoppingConfig(kind="relative", alpha_gamma=alpha, abs_variant=False)
            trace = trace_from([e_n, e_ahead])
            a = relative_reduction_should_stop(trace, DelayState(1), c_abs, dim=dim, n=0)
            s = relative_reduction_should_stop(trace, DelayState(1), c_sgn, dim=dim, n=0)
            assert a == s

    def test_stopper_flow_with_growth_then_stop(self):
        # energies engineered: initial growth of xi, then rapid flattening
        cfg = StoppingConfig(kind="relative", alpha_gamma=0.5, n_min=0, n_batch=1,
                             d_init=1, delta_d=1, tau=1.01, abs_variant=True)
        stopper = make_stopper(cfg, dim=10)
        energies = [-1.0, -2.0, -3.5, -3.50001, -3.500011, -3.5000111, -3.50001111]
        stop_at = None
        trace = SolverTrace()
        for k, e in enumerate(energies):
            trace.record(e, np.zeros(1))
            hit = stopper.check(trace)
            if hit is not None:
                stop_at = hit
                break
        assert stop_at is not None
        assert stopper.state.d >= cfg.d_init


class TestDefault:
    def test_zero_gradient_stops(self):
        cfg = StoppingConfig(kind="default", g_tol=0.0)
        assert default_should_stop(0.0, cfg)

    def test_boundary_case_stops(self):
        cfg = StoppingConfig(kind="default", g_tol=1e-8)
        assert default_should_stop(1e-8, cfg)

    def test_above_threshold_continues(self):
        cfg = StoppingConfig(kind="default", g_tol=1e-8)
        assert not default_should_stop(2e-8, cfg)

    def test_stopper_respects_n_min(self):
        cfg = StoppingConfig(kind="default", g_tol=1e-6, n_min=3)
        stopper = make_stopper(cfg, 5)
        grads = [0.0, 0.0, 0.0, 0.0, 0.0]
        trace = SolverTrace()
        hits = []
        for k, g in enumerate(grads):
            trace.record(-1.0, np.zeros(1), grad_inf=g)
            hits.append(stopper.check(trace))
        assert hits[:3] == [None, None, None]
        assert hits[3] == 3
