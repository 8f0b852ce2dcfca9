import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from warmstart_hmc.analysis import (ShiftSchedule, TwistedNorm, acceptance_dichotomy, aux_recursion_check,
                                    chaos_tail_check, contraction_check, logcosh_third_tensor,
                                    logdet_expansion_check, strong_error_fit, tensor_norm_12_3)
from warmstart_hmc.core import RegularityMeta
from warmstart_hmc.exceptions import ConfigurationError, UnsupportedTargetError
from warmstart_hmc.potentials import make_gaussian, make_logcosh_perturbed

SPECTRUM = np.linspace(1.0, 4.0, 4)
GAMMA = math.sqrt(32 * 4.0)


@given(gamma=st.floats(0.1, 50.0), seed=st.integers(0, 2 ** 32 - 1))
def test_twisted_norm_sandwich(gamma, seed):
    gen = np.random.default_rng(seed)
    dx, dp = gen.standard_normal((2, 5, 3))
    norm = TwistedNorm(gamma)
    low, high = norm.sandwich(dx, dp)
    value = norm(dx, dp)
    assert np.all(low <= value * (1 + 1e-12)) and np.all(value <= high * (1 + 1e-12))


class TestContraction:
    def test_contracts(self):
        oracle = make_gaussian(SPECTRUM)
        h = 0.01 / GAMMA ** 2
        res = contraction_check(oracle, GAMMA, h, trials=500, rng=1)
        assert res.passed and res.max_ratio < 1 and res.c_prime > 0
        assert res.rate_unit == pytest.approx(h / GAMMA)

    def test_logcosh_with_reference_flow(self):
        oracle = make_logcosh_perturbed(1.0, 1.0, 1.0, 3)
        gamma = math.sqrt(32 * oracle.meta.beta)
        res = contraction_check(oracle, gamma, 0.01 * math.sqrt(oracle.meta.alpha) / gamma ** 2, trials=50, rng=2)
        assert res.passed

    def test_preconditions(self):
        oracle = make_gaussian(SPECTRUM)
        with pytest.raises(ConfigurationError):
            contraction_check(oracle, 0.9 * GAMMA, 1e-6)
        with pytest.raises(ConfigurationError):
            contraction_check(oracle, GAMMA, 1.1 * 0.01 / GAMMA ** 2)

    def test_seeded(self):
        oracle = make_gaussian(SPECTRUM)
        a = contraction_check(oracle, GAMMA, 1e-5, trials=20, rng=9)
        b = contraction_check(oracle, GAMMA, 1e-5, trials=20, rng=9)
        assert np.array_equal(a.ratios, b.ratios)


class TestStrongError:
    def test_orders(self):
        oracle = make_gaussian(SPECTRUM)
        grid = 2.0 ** -np.arange(4, 9)
        fit = strong_error_fit("obabco", oracle, grid, samples=500, rng=3)
        assert 3.7 <= fit.slope_x <= 4.3 and 2.7 <= fit.slope_p <= 3.3
        assert min(fit.r2_x, fit.r2_p) >= 0.98
        fit = strong_error_fit("obabo", oracle, grid, samples=500, rng=3)
        assert 2.7 <= fit.slope_x <= 3.3

    def test_free_particle_is_degenerate(self, free_particle):
        init = lambda n, gen: (gen.standard_normal((n, 2)), gen.standard_normal((n, 2)))  # noqa: E731
        fit = strong_error_fit("obabco", free_particle(2), [0.01, 0.02, 0.04], samples=10, rng=0, init=init)
        assert fit.degenerate and math.isnan(fit.slope_x)
        assert np.all(fit.errors_x < 1e-12)

    def test_needs_gaussian_for_default_init(self):
        with pytest.raises(UnsupportedTargetError):
            strong_error_fit("obabco", make_logcosh_perturbed(1.0, 1.0, 1.0, 2), [0.01, 0.02], samples=4)


class TestShiftSchedule:
    @pytest.mark.parametrize("k", [0, 7, 48])
    def test_closed_form_integral(self, k):
        sched = ShiftSchedule.for_target(RegularityMeta(1.0, 4.0), GAMMA, 1e-3, 50)
        numeric = integrate.quad(sched.eta_p, k * sched.h, (k + 1) * sched.h, epsabs=0, epsrel=1e-12)[0]
        assert sched.eta_p_integral(k) == pytest.approx(numeric, rel=1e-9)

    def test_low_friction_rate(self):
        sched = ShiftSchedule.for_target(RegularityMeta(1.0, 4.0), 1.0, 1e-3, 10)
        assert sched.omega == -2.0
        assert sched.rate_integral(0) == pytest.approx(sched.eta_p_integral(0))

    def test_friction_grows_towards_horizon(self):
        sched = ShiftSchedule.for_target(RegularityMeta(1.0, 4.0), GAMMA, 1e-3, 50)
        t = np.linspace(0, sched.horizon, 20)
        assert np.all(np.diff(sched.gamma_t(t)) > 0) and np.all(sched.eta_x(t) > 0)


class TestAuxRecursion:
    @pytest.mark.parametrize("spectrum", [np.ones(3), SPECTRUM])
    def test_contracts_and_meets(self, spectrum):
        oracle = make_gaussian(spectrum)
        gamma = math.sqrt(32 * oracle.meta.beta)
        h = 0.01 / (math.sqrt(oracle.meta.kappa) * gamma)
        res = aux_recursion_check(oracle, gamma, h, 40, trials=32, rng=4)
        assert res.passed and res.c_prime > 0 and res.terminal_gap == 0.0
        assert res.distances.shape == (41, 32)

    def test_preconditions(self):
        with pytest.raises(UnsupportedTargetError):
            aux_recursion_check(make_logcosh_perturbed(1.0, 1.0, 1.0, 2), 8.0, 1e-4, 5)
        with pytest.raises(ConfigurationError):
            aux_recursion_check(make_gaussian(SPECTRUM), GAMMA, 0.1, 5)


class TestChaos:
    def test_unit_diagonal_median(self):
        d = 400
        res = chaos_tail_check(np.ones(d), trials=2000, rng=5)
        assert res.median == pytest.approx(math.sqrt(3 * d), rel=0.03)
        assert res.passed and res.beta_bar == 1.0

    def test_dense_matches_diagonal(self):
        diag = np.array([1.0, -0.5, 0.25, 0.8])
        dense = np.zeros((4, 4, 4))
        dense[np.arange(4), np.arange(4), np.arange(4)] = diag
        assert tensor_norm_12_3(dense) == pytest.approx(1.0)
        a = chaos_tail_check(diag, trials=1000, rng=6)
        b = chaos_tail_check(dense, trials=1000, rng=6)
        assert a.quantiles == pytest.approx(b.quantiles, rel=1e-12)

    def test_logcosh_tensor(self):
        oracle = make_logcosh_perturbed(1.0, 2.0, 1.5, 6)
        tensor = logcosh_third_tensor(oracle, np.full(6, 0.3))
        bound = 2.0 * 1.5 ** 3
        assert np.all(np.abs(tensor) <= bound)
        assert chaos_tail_check(tensor, trials=1000, rng=7, beta_bar=bound).passed

    def test_too_few_trials(self):
        with pytest.raises(ConfigurationError):
            chaos_tail_check(np.ones(3), deltas=(0.01,), trials=500)


class TestLogdet:
    def test_example(self):
        residual, bound = logdet_expansion_check(0.1 * np.eye(5))
        assert residual == pytest.approx(5 * abs(math.log(1.1) - 0.1 + 0.005), rel=1e-9)
        assert residual <= bound

    def test_cubic_order(self):
        ts = np.geomspace(1e-3, 1e-2, 6)
        res = [logdet_expansion_check(t * np.eye(3))[0] for t in ts]
        assert 2.9 <= np.polyfit(np.log(ts), np.log(res), 1)[0] <= 3.1

    @given(seed=st.integers(0, 2 ** 32 - 1), scale=st.floats(0.01, 0.9))
    def test_bound(self, seed, scale):
        gen = np.random.default_rng(seed)
        a = gen.standard_normal((4, 4))
        a = a + a.T
        M = scale * a / np.linalg.norm(a, 2)
        residual, bound = logdet_expansion_check(M)
        assert residual <= bound * (1 + 1e-9) + 1e-15

    def test_norm_precondition(self):
        with pytest.raises(ConfigurationError):
            logdet_expansion_check(np.eye(2))


def test_acceptance_dichotomy():
    out = acceptance_dichotomy(4096, n_proposals=40, rng=8)
    large = np.mean([r.accept_prob for r in out["large"][1:]])
    small = np.mean([r.accept_prob for r in out["small"][1:]])
    assert set(out) == {"large", "small"} and len(out["small"]) == 41
    assert small > 0.4 and large < small
