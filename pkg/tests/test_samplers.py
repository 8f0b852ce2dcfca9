import math

import numpy as np
import pytest

from warmstart_hmc.core import PhasePoint, RegularityMeta
from warmstart_hmc.exceptions import ConfigurationError, UnsupportedTargetError
from warmstart_hmc.gaussian_exact import GaussianPhaseLaw
from warmstart_hmc.integrators import LeapfrogParams, exact_flow_arrays
from warmstart_hmc.potentials import GaussianPotential, make_gaussian, make_logcosh_perturbed
from warmstart_hmc.samplers import (RECORD_FIELDS, MhmcParams, ScheduleConstants, mhmc_step, plan_two_phase,
                                    proximal_sampler, run_mhmc, run_unadjusted, two_phase_sample)

KAPPA4 = RegularityMeta(alpha=1.0, beta=4.0)
FROZEN = ScheduleConstants(polylog=1.0)


class ExplodingGradient(GaussianPotential):
    def _grad(self, x):
        return 1e300 * np.sign(x)


class TestMhmc:
    def test_exact_flow_accepts_half(self, rng):
        spectrum = np.array([1.0, 3.0])
        flow = lambda x, p, t: exact_flow_arrays(x, p, spectrum, t)  # noqa: E731
        params = MhmcParams(LeapfrogParams(0.1, 10))
        _, _, probs = run_mhmc(rng.standard_normal((50, 2)), make_gaussian(spectrum), params, 20, rng, flow=flow)
        assert np.allclose(probs, 0.5, atol=1e-12)

    def test_non_lazy_exact_flow_always_accepts(self, rng):
        spectrum = np.array([2.0])
        flow = lambda x, p, t: exact_flow_arrays(x, p, spectrum, t)  # noqa: E731
        x0 = np.array([0.7])
        point, accepted = mhmc_step(PhasePoint(x0, [0.0]), make_gaussian(spectrum),
                                    MhmcParams(LeapfrogParams(0.1, 5), lazy=False), rng, flow=flow)
        assert accepted and point.x[0] != x0[0]

    def test_blowup_is_rejected(self, rng):
        oracle = ExplodingGradient(np.ones(3))
        x0 = np.ones((10, 3))
        x, records, probs = run_mhmc(x0, oracle, MhmcParams(LeapfrogParams(0.5, 5)), 30, rng)
        assert np.array_equal(x, x0)
        assert np.all(probs == 0) and all(r.accepted == 0 for r in records)

    def test_gradient_cost(self, rng):
        oracle = make_gaussian(np.ones(2))
        run_mhmc(np.zeros(2), oracle, MhmcParams(LeapfrogParams(0.1, 7)), 12, rng, record=False)
        assert oracle.grad_queries == 1 + 12 * 7

    def test_records(self, rng):
        _, records, _ = run_mhmc(np.zeros(2), make_gaussian(np.ones(2)), MhmcParams(LeapfrogParams(0.1, 3)),
                                 10, rng, record_every=4)
        assert [r.iter for r in records] == [0, 4, 8, 10]
        assert tuple(records[-1].as_row()) == RECORD_FIELDS

    def test_stop_hook(self, rng):
        _, records, probs = run_mhmc(np.zeros(2), make_gaussian(np.ones(2)), MhmcParams(LeapfrogParams(0.1, 3)),
                                     100, rng, stop=lambda r: r.iter >= 5)
        assert records[-1].iter == 5 and len(probs) == 5


class TestUnadjusted:
    def test_stationary_oho_law_stays_exact(self, rng):
        spectrum = np.array([1.0, 2.0, 4.0])
        law = GaussianPhaseLaw.stationary(spectrum)
        _, records = run_unadjusted("oho", law, make_gaussian(spectrum), 0.1, 3.0, 25, rng, n_chains=8)
        assert max(r.divergence for r in records) <= 1e-9

    def test_divergence_decreases(self, rng):
        spectrum = np.array([1.0, 4.0])
        law = GaussianPhaseLaw.product(spectrum, x_mean=3.0)
        _, records = run_unadjusted("obabco", law, make_gaussian(spectrum), 0.05, 8.0, 2000, rng, n_chains=4, record_every=100)
        assert records[-1].divergence < 0.01 * records[0].divergence

    def test_non_gaussian_records_no_divergence(self, rng):
        oracle = make_logcosh_perturbed(1.0, 1.0, 1.0, 2)
        point, records = run_unadjusted("obabo", PhasePoint(np.zeros(2), np.zeros(2)), oracle, 0.1, 2.0, 5, rng)
        assert point.dim == 2 and records[-1].divergence is None
        assert oracle.grad_queries == 6

    def test_unknown_scheme(self, rng):
        with pytest.raises(ConfigurationError):
            run_unadjusted("baoab", PhasePoint(np.zeros(1), np.zeros(1)), make_gaussian([1.0]), 0.1, 1.0, 1, rng)


class TestPlan:
    def test_rejects_non_strongly_convex(self):
        with pytest.raises(UnsupportedTargetError):
            plan_two_phase(RegularityMeta(alpha=0.0, beta=1.0), 10)

    def test_argument_checks(self):
        with pytest.raises(ConfigurationError):
            plan_two_phase(KAPPA4, 10, eps=1.0)
        with pytest.raises(ConfigurationError):
            plan_two_phase(KAPPA4, 0)

    def test_friction(self):
        assert plan_two_phase(KAPPA4, 10).gamma == pytest.approx(math.sqrt(128.0))

    def test_step_size_quarter_power(self):
        a = plan_two_phase(KAPPA4, 256, constants=FROZEN)
        b = plan_two_phase(KAPPA4, 512, constants=FROZEN)
        assert a.h1 / b.h1 == pytest.approx(2 ** 0.25, rel=1e-12)

    def test_phase_two_count_independent_of_dimension(self):
        counts = {plan_two_phase(KAPPA4, d).N2 for d in (16, 256, 4096, 65536)}
        assert len(counts) == 1

    def _query_slope(self, constants):
        dims = [256, 1024, 4096, 16384]
        queries = [plan_two_phase(KAPPA4, d, constants=constants).predicted_grad_queries for d in dims]
        return np.polyfit(np.log(dims), np.log(queries), 1)[0]

    def test_total_query_slope_with_frozen_logs(self):
        assert abs(self._query_slope(FROZEN) - 0.25) <= 0.1

    @pytest.mark.xfail(strict=True, reason="the log(e + kappa d) factor in the phase-one step adds about 0.1 "
                                           "to the slope over d in [256, 16384]")
    def test_total_query_slope_default(self):
        assert abs(self._query_slope(None) - 0.25) <= 0.1


class TestTwoPhase:
    def test_gradient_accounting(self):
        oracle = make_gaussian(np.linspace(1.0, 4.0, 8))
        plan = plan_two_phase(oracle.meta, 8)
        result = two_phase_sample(plan, oracle, 3, n_chains=5)
        assert result.grad_queries == oracle.grad_queries == plan.predicted_grad_queries
        assert result.x.shape == (5, 8)

    def test_deterministic(self):
        plan = plan_two_phase(KAPPA4, 6)
        runs = [two_phase_sample(plan, make_gaussian(np.linspace(1, 4, 6)), 11, n_chains=3).x for _ in range(2)]
        assert np.array_equal(runs[0], runs[1])
        other = two_phase_sample(plan, make_gaussian(np.linspace(1, 4, 6)), 12, n_chains=3).x
        assert not np.array_equal(runs[0], other)

    def test_records_span_both_phases(self):
        oracle = make_gaussian(np.ones(2) * 4.0)
        plan = plan_two_phase(RegularityMeta(alpha=4.0, beta=4.0), 2)
        result = two_phase_sample(plan, oracle, 0, record=True)
        assert [r.iter for r in result.records] == list(range(1, plan.N1 + plan.N2 + 1))

    def test_moments(self):
        spectrum = np.linspace(1.0, 4.0, 4)
        plan = plan_two_phase(KAPPA4, 4)
        x = two_phase_sample(plan, make_gaussian(spectrum), 5, n_chains=4000).x
        assert np.all(np.abs(x.mean(axis=0)) <= 4 * np.sqrt(1 / spectrum / 4000))
        assert np.allclose(x.var(axis=0), 1 / spectrum, rtol=0.1)


def test_proximal_sampler_moments():
    spectrum = np.array([1.0, 4.0])
    result = proximal_sampler(make_gaussian(spectrum), n_outer=40, rng=2, n_chains=2000, x0=np.full(2, 0.5))
    x = result.x
    assert np.all(np.abs(x.mean(axis=0)) <= 5 * np.sqrt(1 / spectrum / 2000))
    assert np.allclose(x.var(axis=0), 1 / spectrum, rtol=0.12)
    assert 0.3 <= result.phase2_accept_rate <= 0.5
