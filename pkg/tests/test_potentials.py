import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from warmstart_hmc.exceptions import ConfigurationError, ConvergenceError, DomainError
from warmstart_hmc.potentials import (finite_difference_grad, make_gaussian, make_logcosh_perturbed,
                                      proximal_oracle, proximal_shift)


def logcosh_samples(a, b, c, n, d, rng):
    """Exact draws from the separable log-cosh target by inverse-CDF on a fine grid."""
    grid = np.linspace(-12, 12, 200_001)
    logp = -0.5 * a * grid ** 2 - b * np.log(np.cosh(c * grid))
    dens = np.exp(logp - logp.max())
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    return np.interp(rng.random((n, d)), cdf, grid)


class TestGaussian:
    def test_example(self):
        oracle = make_gaussian([1.0, 4.0])
        assert np.array_equal(oracle.grad(np.array([1.0, 1.0])), [1.0, 4.0])
        assert oracle.value(np.array([1.0, 1.0])) == 2.5
        assert (oracle.meta.alpha, oracle.meta.beta, oracle.meta.beta_h1, oracle.meta.beta_h2) == (1, 4, 0, 0)

    @pytest.mark.parametrize("bad", [[1.0, 0.0], [2.0, -1.0]])
    def test_non_positive(self, bad):
        with pytest.raises(DomainError):
            make_gaussian(bad)

    def test_counter(self):
        oracle = make_gaussian([1.0, 2.0])
        for _ in range(3):
            oracle.grad(np.zeros(2))
        oracle.grad(np.zeros((10, 2)))  # one batched call is one query
        oracle.value(np.zeros(2))
        assert oracle.grad_queries == 4
        oracle.reset_counter()
        assert oracle.grad_queries == 0

    def test_wrong_dimension(self):
        with pytest.raises(ConfigurationError):
            make_gaussian([1.0, 2.0]).grad(np.zeros(3))


class TestLogCosh:
    def test_meta(self):
        oracle = make_logcosh_perturbed(1.0, 2.0, 1.5, 3)
        assert oracle.meta.alpha == 1.0
        assert oracle.meta.beta == pytest.approx(1.0 + 2.0 * 1.5 ** 2)
        assert oracle.meta.beta_h1 == oracle.meta.beta_h2 == pytest.approx(2.0 * 1.5 ** 3)

    def test_grad_at_origin(self):
        assert np.array_equal(make_logcosh_perturbed(1, 1, 1, 5).grad(np.zeros(5)), np.zeros(5))

    def test_b_zero_is_gaussian(self, rng):
        oracle = make_logcosh_perturbed(2.0, 0.0, 3.0, 4)
        gauss = make_gaussian(np.full(4, 2.0))
        x = rng.standard_normal(4)
        assert oracle.value(x) == pytest.approx(gauss.value(x), rel=1e-14)
        assert np.allclose(oracle.grad(x), gauss.grad(x), rtol=1e-14)

    def test_gradient_finite_differences(self, rng):
        oracle = make_logcosh_perturbed(1.0, 1.5, 2.0, 6)
        for _ in range(20):
            x = 2 * rng.standard_normal(6)
            fd = finite_difference_grad(oracle, x)
            assert np.allclose(oracle.grad(x), fd, rtol=1e-5, atol=1e-7)

    def test_hessian_and_third_finite_differences(self, rng):
        oracle = make_logcosh_perturbed(1.0, 1.5, 2.0, 4)
        eps = 1e-5
        for _ in range(5):
            x, v, w = rng.standard_normal((3, 4))
            fd_h = (oracle.grad(x + eps * v) - oracle.grad(x - eps * v)) / (2 * eps)
            assert np.allclose(oracle.hessian_apply(x, v), fd_h, rtol=1e-6, atol=1e-8)
            fd_t = (oracle.hessian_apply(x + eps * w, v) - oracle.hessian_apply(x - eps * w, v)) / (2 * eps)
            assert np.allclose(oracle.third_apply(x, v, w), fd_t, rtol=1e-5, atol=1e-7)

    def test_large_arguments_are_finite(self):
        oracle = make_logcosh_perturbed(1.0, 1.0, 50.0, 2)
        assert np.isfinite(oracle.value(np.array([1e3, -1e3])))


@st.composite
def oracle_and_points(draw):
    kind = draw(st.sampled_from(["gauss", "logcosh"]))
    d = draw(st.integers(1, 6))
    if kind == "gauss":
        spectrum = draw(st.lists(st.floats(0.1, 10.0), min_size=d, max_size=d))
        oracle = make_gaussian(spectrum)
    else:
        oracle = make_logcosh_perturbed(draw(st.floats(0.1, 3)), draw(st.floats(0, 3)), draw(st.floats(0, 3)), d)
    pts = draw(st.lists(st.floats(-5, 5), min_size=3 * d, max_size=3 * d))
    return oracle, np.array(pts).reshape(3, d)


class TestInvariants:
    @given(oracle_and_points())
    def test_gradient_lipschitz(self, data):
        oracle, (x, y, _) = data
        lhs = np.linalg.norm(oracle.grad(x) - oracle.grad(y))
        assert lhs <= (1 + 1e-6) * oracle.meta.beta * np.linalg.norm(x - y) + 1e-12

    @given(oracle_and_points())
    def test_third_derivative_bound(self, data):
        oracle, (x, v, _) = data
        assert np.linalg.norm(oracle.third_apply(x, v, v)) <= oracle.meta.beta_h2 * (v @ v) + 1e-12

    @given(oracle_and_points())
    def test_hessian_lipschitz(self, data):
        oracle, (x, y, v) = data
        # separable targets: the Hessian difference is diagonal, its Frobenius norm is a vector norm
        hx = oracle.hessian_apply(x, np.ones_like(x))
        hy = oracle.hessian_apply(y, np.ones_like(y))
        assert np.linalg.norm(hx - hy) <= oracle.meta.beta_h1 * np.linalg.norm(x - y) + 1e-12

    @pytest.mark.parametrize("delta", [0.1, 0.01])
    @pytest.mark.parametrize("target", ["gauss", "logcosh"])
    def test_score_concentration(self, delta, target, rng):
        d, n = 50, 20_000
        if target == "gauss":
            spectrum = np.linspace(1.0, 4.0, d)
            oracle = make_gaussian(spectrum)
            x = rng.standard_normal((n, d)) / np.sqrt(spectrum)
        else:
            oracle = make_logcosh_perturbed(1.0, 1.0, 1.0, d)
            x = logcosh_samples(1.0, 1.0, 1.0, n, d, rng)
        beta = oracle.meta.beta
        sq = np.sum(oracle.grad(x) ** 2, axis=-1)
        assert np.mean(sq > 4 * (beta * d + beta * math.log(1 / delta))) <= delta


class TestProximal:
    def test_minimiser_example(self):
        base = make_gaussian(np.ones(3))
        y = np.array([1.0, -2.0, 0.5])
        shifted = proximal_shift(base, y, 0.5)
        assert shifted.meta.alpha == base.meta.alpha + 2.0
        assert np.allclose(proximal_oracle(shifted, 1e-12), 2.0 / 3.0 * y, atol=1e-11)

    def test_conditioning(self):
        for beta in (1.0, 4.0, 30.0):
            base = make_gaussian(np.linspace(0.1, beta, 5))
            shifted = proximal_shift(base, np.zeros(5), 1.0 / (2 * beta))
            assert shifted.meta.alpha >= beta
            assert shifted.meta.beta <= 3 * beta
            assert shifted.meta.kappa <= 3

    def test_gradient_counts_base(self):
        base = make_gaussian(np.ones(2))
        shifted = proximal_shift(base, np.ones(2), 0.5)
        shifted.grad(np.zeros(2))
        assert base.grad_queries == 1 and shifted.grad_queries == 1

    def test_batched_centres(self, rng):
        base = make_logcosh_perturbed(1.0, 1.0, 1.0, 3)
        y = rng.standard_normal((8, 3))
        x_star = proximal_oracle(proximal_shift(base, y, 0.25), 1e-10)
        g = base.grad(x_star) + (x_star - y) / 0.25
        assert np.max(np.abs(g)) <= 1e-10

    def test_convergence_error(self):
        shifted = proximal_shift(make_gaussian([1.0, 100.0]), np.ones(2), 10.0)
        with pytest.raises(ConvergenceError):
            proximal_oracle(shifted, 1e-14, max_iter=3)
