"""Numerical checks of the contraction, discretisation and concentration estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from ._validation import as_generator, check_scalar
from .exceptions import ConfigurationError, UnsupportedTargetError
from .integrators import (FrictionParams, LeapfrogParams, exact_flow_arrays, hamiltonian_flow_for,
                          oho_arrays, scheme_step_arrays)
from .potentials import GaussianPotential, LogCoshPotential
from .samplers import MhmcParams, run_mhmc

_TOL = 1e-9


@dataclass(frozen=True)
class TwistedNorm:
    """Squared twisted distance |dx|^2 + |dx + (2/gamma) dp|^2."""

    gamma: float

    def __call__(self, dx, dp) -> np.ndarray:
        dx = np.asarray(dx)
        twisted = dx + (2.0 / self.gamma) * np.asarray(dp)
        return np.sum(dx * dx, axis=-1) + np.sum(twisted * twisted, axis=-1)

    def sandwich(self, dx, dp) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper bounds (1/3, 3) x (|dx|^2 + 4 |dp|^2 / gamma^2)."""
        base = np.sum(np.square(dx), axis=-1) + 4.0 / self.gamma ** 2 * np.sum(np.square(dp), axis=-1)
        return base / 3.0, 3.0 * base


def _stationary_draws(oracle, n, gen):
    spectrum = getattr(oracle, "spectrum", None)
    if spectrum is None:
        raise UnsupportedTargetError("stationary draws need a diagonal Gaussian target")
    x = gen.standard_normal((n, oracle.d)) / np.sqrt(spectrum)
    return x, gen.standard_normal((n, oracle.d))


# ---------------------------------------------------------------------------
# contraction of the idealised scheme
# ---------------------------------------------------------------------------

@dataclass
class ContractionResult:
    max_ratio: float
    c_prime: float
    ratios: np.ndarray
    rate_unit: float

    @property
    def passed(self) -> bool:
        return bool(self.max_ratio < 1 and self.c_prime > 0)


def contraction_check(oracle, gamma: float, h: float, trials: int = 1000, rng=None,
                      flow=None, spread: float = 1.0) -> ContractionResult:
    """Worst one-step ratio of the twisted distance under synchronously coupled OHO.

    Pairs of starting points are drawn independently from N(0, spread^2 I)
    per position and momentum.  ``c_prime`` is the largest c with every
    ratio at most exp(-c alpha h / gamma).

    Raises:
        ConfigurationError: unless gamma >= sqrt(32 beta) and
            h <= 0.01 sqrt(alpha) / gamma^2.
    """
    meta = oracle.meta
    if gamma * (1 + _TOL) < math.sqrt(32 * meta.beta):
        raise ConfigurationError("contraction check needs gamma >= sqrt(32 beta)")
    if h > 0.01 * math.sqrt(meta.alpha) / gamma ** 2 * (1 + _TOL):
        raise ConfigurationError("contraction check needs h <= 0.01 sqrt(alpha) / gamma^2")
    gen = as_generator(rng)
    flow = flow or hamiltonian_flow_for(oracle)
    fp = FrictionParams(gamma, h)
    d = oracle.d
    x, p = spread * gen.standard_normal((trials, d)), spread * gen.standard_normal((trials, d))
    xb, pb = spread * gen.standard_normal((trials, d)), spread * gen.standard_normal((trials, d))
    xi1, xi2 = gen.standard_normal((trials, d)), gen.standard_normal((trials, d))
    norm = TwistedNorm(gamma)
    before = norm(x - xb, p - pb)
    x1, p1 = oho_arrays(x, p, flow, h, fp, xi1, xi2)
    xb1, pb1 = oho_arrays(xb, pb, flow, h, fp, xi1, xi2)
    ratios = norm(x1 - xb1, p1 - pb1) / before
    worst = float(np.max(ratios))
    unit = meta.alpha * h / gamma
    c_prime = -math.log(worst) / unit if worst > 0 else math.inf
    return ContractionResult(max_ratio=worst, c_prime=c_prime, ratios=ratios, rate_unit=unit)


# ---------------------------------------------------------------------------
# strong one-step errors
# ---------------------------------------------------------------------------

@dataclass
class StrongErrorFit:
    scheme: str
    h_grid: np.ndarray
    errors_x: np.ndarray
    errors_p: np.ndarray
    slope_x: float = float("nan")
    slope_p: float = float("nan")
    r2_x: float = float("nan")
    r2_p: float = float("nan")
    degenerate: bool = False


def _loglog(h, err):
    fit = stats.linregress(np.log(h), np.log(err))
    return float(fit.slope), float(fit.rvalue ** 2)


def strong_error_fit(scheme: str, oracle, h_grid, samples: int = 1000, gamma: float | None = None,
                     rng=None, init=None) -> StrongErrorFit:
    """One-step errors of a scheme against OHO under shared noise.

    Starting points are drawn at stationarity (or from ``init(n, gen)``); for
    each h the root-mean-square position and momentum differences are
    recorded and log-log slopes fitted.  A target with zero gradient makes
    the scheme exact (errors at round-off level); the result is then flagged
    ``degenerate`` and not fitted.
    """
    gen = as_generator(rng)
    h_grid = np.asarray(sorted(h_grid), dtype=np.float64)
    gamma = math.sqrt(32 * oracle.meta.beta) if gamma is None else check_scalar(gamma, "gamma", min_val=0)
    x0, p0 = init(samples, gen) if init is not None else _stationary_draws(oracle, samples, gen)
    flow = hamiltonian_flow_for(oracle)
    ex, ep = [], []
    for h in h_grid:
        fp = FrictionParams(gamma, h)
        xi1, xi2 = gen.standard_normal(x0.shape), gen.standard_normal(x0.shape)
        xs, ps = scheme_step_arrays(scheme, x0, p0, oracle, h, fp, xi1, xi2)
        xr, pr = oho_arrays(x0, p0, flow, h, fp, xi1, xi2)
        ex.append(math.sqrt(np.mean(np.sum((xs - xr) ** 2, axis=-1))))
        ep.append(math.sqrt(np.mean(np.sum((ps - pr) ** 2, axis=-1))))
    ex, ep = np.array(ex), np.array(ep)
    result = StrongErrorFit(scheme, h_grid, ex, ep)
    # errors at round-off level mean the scheme is exact on this target
    floor = 1e-12 * math.sqrt(np.mean(np.sum(x0 ** 2 + p0 ** 2, axis=-1)))
    if np.any(ex <= floor) or np.any(ep <= floor):
        result.degenerate = True
        return result
    result.slope_x, result.r2_x = _loglog(h_grid, ex)
    result.slope_p, result.r2_p = _loglog(h_grid, ep)
    return result


# ---------------------------------------------------------------------------
# auxiliary shifted process
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShiftSchedule:
    """Time-dependent shift eta^p_t = c0 omega / (exp(omega (N h - t + A h)) - 1)."""

    omega: float
    c0: float
    A: float
    N: int
    h: float
    gamma: float

    @classmethod
    def for_target(cls, meta, gamma: float, h: float, N: int, c0: float = 3.0, A: float = 100.0):
        """omega = alpha/gamma in the high-friction regime, -sqrt(beta) otherwise."""
        if gamma * (1 + _TOL) >= math.sqrt(32 * meta.beta):
            omega = meta.alpha / gamma
        else:
            omega = -math.sqrt(meta.beta)
        return cls(omega=omega, c0=c0, A=A, N=int(N), h=h, gamma=gamma)

    @property
    def horizon(self) -> float:
        return self.N * self.h

    def _s(self, t):
        return self.horizon - t + self.A * self.h

    def eta_p(self, t):
        return self.c0 * self.omega / np.expm1(self.omega * self._s(t))

    def gamma_t(self, t):
        return self.gamma + self.eta_p(t)

    def eta_x(self, t):
        return 0.5 * self.gamma_t(t) * self.eta_p(t)

    def eta_p_integral(self, k: int) -> float:
        """Closed-form integral of eta^p over [k h, (k+1) h]."""
        s1, s2 = self._s(k * self.h), self._s((k + 1) * self.h)
        w = self.omega
        return self.c0 * (math.log(abs(-math.expm1(-w * s1))) - math.log(abs(-math.expm1(-w * s2))))

    def eta_x_integral(self, k: int) -> float:
        return integrate.quad(self.eta_x, k * self.h, (k + 1) * self.h, epsabs=0, epsrel=1e-12)[0]

    def rate_integral(self, k: int) -> float:
        """Integral of (max(omega, 0) + eta^p) over step k."""
        return max(self.omega, 0.0) * self.h + self.eta_p_integral(k)


@dataclass
class AuxRecursionResult:
    ratios: np.ndarray
    rate_integrals: np.ndarray
    c_prime: float
    terminal_gap: float
    distances: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return bool(self.c_prime > 0 and np.all(np.isfinite(self.ratios)) and self.terminal_gap == 0.0)


def aux_recursion_check(oracle, gamma: float, h: float, N: int, schedule: ShiftSchedule | None = None,
                        trials: int = 64, rng=None, spread: float = 1.0) -> AuxRecursionResult:
    """Track the auxiliary shifted process against a synchronously coupled OHO chain.

    Each step shifts the auxiliary momentum towards the reference chain,
    then applies OHO with the same noise.  The last step sets the auxiliary
    state equal to the reference state.  Ratios of successive squared
    auxiliary distances are compared to exp(-c' * integral(omega_+ + eta^p)).

    Raises:
        UnsupportedTargetError: for non-quadratic targets.
        ConfigurationError: unless h <= 0.01 / (sqrt(kappa) gamma).
    """
    spectrum = getattr(oracle, "spectrum", None)
    if spectrum is None:
        raise UnsupportedTargetError("auxiliary recursion check uses the exact quadratic flow")
    meta = oracle.meta
    if h > 0.01 / (math.sqrt(meta.kappa) * gamma) * (1 + _TOL):
        raise ConfigurationError("auxiliary recursion needs h <= 0.01 / (sqrt(kappa) gamma)")
    sched = schedule or ShiftSchedule.for_target(meta, gamma, h, N)
    gen = as_generator(rng)
    d = oracle.d
    fp = FrictionParams(gamma, h)
    flow = lambda x, p, t: exact_flow_arrays(x, p, spectrum, t)  # noqa: E731
    x, p = spread * gen.standard_normal((trials, d)), spread * gen.standard_normal((trials, d))
    xa, pa = spread * gen.standard_normal((trials, d)), spread * gen.standard_normal((trials, d))

    def dist2(k, x, p, xa, pa):
        return TwistedNorm(float(sched.gamma_t(k * h)))(x - xa, p - pa)

    dists = [dist2(0, x, p, xa, pa)]
    for k in range(N):
        xi1, xi2 = gen.standard_normal((trials, d)), gen.standard_normal((trials, d))
        if k < N - 1:
            shrink = -math.expm1(-sched.eta_p_integral(k))
            p_shift = pa - shrink * (pa - p) - sched.eta_x_integral(k) * (xa - x)
            xa, pa = oho_arrays(xa, p_shift, flow, h, fp, xi1, xi2)
        x, p = oho_arrays(x, p, flow, h, fp, xi1, xi2)
        if k == N - 1:
            xa, pa = x.copy(), p.copy()
        dists.append(dist2(k + 1, x, p, xa, pa))
    dists = np.array(dists)
    ratios = dists[1:N] / dists[: N - 1]
    integrals = np.array([sched.rate_integral(k) for k in range(N - 1)])
    c_prime = float(np.min(-np.log(ratios) / integrals[:, None]))
    gap = float(max(np.max(np.abs(xa - x)), np.max(np.abs(pa - p))))
    return AuxRecursionResult(ratios=ratios, rate_integrals=integrals, c_prime=c_prime,
                              terminal_gap=gap, distances=dists)


# ---------------------------------------------------------------------------
# Gaussian chaos tails
# ---------------------------------------------------------------------------

@dataclass
class ChaosTailResult:
    d: int
    beta_bar: float
    deltas: tuple
    quantiles: dict
    bounds: dict
    median: float

    @property
    def passed(self) -> bool:
        return all(self.quantiles[dl] <= self.bounds[dl] for dl in self.deltas)


def tensor_norm_12_3(tensor: np.ndarray) -> float:
    """{1,2},{3} norm of a dense 3-tensor: operator norm of its d^2 x d unfolding."""
    d = tensor.shape[0]
    return float(np.linalg.norm(tensor.reshape(d * d, d), ord=2))


def chaos_tail_check(tensor, deltas=(0.1, 0.01), trials: int = 10_000, rng=None,
                     beta_bar: float | None = None, batch: int = 2000) -> ChaosTailResult:
    """Empirical (1 - delta)-quantiles of |T[xi, xi]| against 8 beta_bar (sqrt(d) + log(1/delta)).

    ``tensor`` is either a dense (d, d, d) array or a 1-d array of diagonal
    entries.  ``beta_bar`` defaults to the exact {1,2},{3} norm.
    """
    deltas = tuple(float(dl) for dl in deltas)
    if trials < 10 / min(deltas):
        raise ConfigurationError(f"need at least {math.ceil(10 / min(deltas))} trials for delta={min(deltas)}")
    gen = as_generator(rng)
    tensor = np.asarray(tensor, dtype=np.float64)
    diagonal = tensor.ndim == 1
    d = tensor.shape[0]
    if beta_bar is None:
        beta_bar = float(np.max(np.abs(tensor))) if diagonal else tensor_norm_12_3(tensor)
    norms = []
    for start in range(0, trials, batch):
        xi = gen.standard_normal((min(batch, trials - start), d))
        if diagonal:
            val = tensor * xi * xi
        else:
            val = np.einsum("ijk,ni,nj->nk", tensor, xi, xi)
        norms.append(np.linalg.norm(val, axis=-1))
    norms = np.concatenate(norms)
    quantiles = {dl: float(np.quantile(norms, 1 - dl)) for dl in deltas}
    bounds = {dl: 8.0 * beta_bar * (math.sqrt(d) + math.log(1 / dl)) for dl in deltas}
    return ChaosTailResult(d=d, beta_bar=beta_bar, deltas=deltas, quantiles=quantiles, bounds=bounds,
                           median=float(np.median(norms)))


def logcosh_third_tensor(oracle: LogCoshPotential, x) -> np.ndarray:
    """Diagonal of the third-derivative tensor of a log-cosh target at ``x``."""
    return oracle.third_diagonal(x)


# ---------------------------------------------------------------------------
# log-determinant expansion
# ---------------------------------------------------------------------------

def logdet_expansion_check(M) -> tuple[float, float]:
    """Residual |log det(I+M) - tr M + tr(M^2)/2| and the bound d |M|^3 / (3 (1 - |M|)).

    Raises:
        ConfigurationError: if the operator norm of M is not below 1.
    """
    M = np.asarray(M, dtype=np.float64)
    d = M.shape[0]
    c = float(np.linalg.norm(M, ord=2))
    if c >= 1:
        raise ConfigurationError(f"operator norm {c:.4g} must be < 1")
    sign, logdet = np.linalg.slogdet(np.eye(d) + M)
    residual = abs(logdet - np.trace(M) + 0.5 * np.trace(M @ M))
    return float(residual), d * c ** 3 / (3.0 * (1.0 - c))


# ---------------------------------------------------------------------------
# cold-start acceptance dichotomy
# ---------------------------------------------------------------------------

def acceptance_dichotomy(d: int, n_proposals: int = 100, rng=None, T: float = 1.0,
                         h_large: float | None = None, h_small: float | None = None) -> dict:
    """Lazy MHMC on N(0, I_d) from the origin with a large and a small step size.

    The large step defaults to d^(-1/4) and the small one to d^(-1/2); each
    proposal integrates for time T.  Returns ``{"large": records, "small":
    records}`` (lists of :class:`ChainRecord`).
    """
    gen = as_generator(rng)
    out = {}
    for arm, h in (("large", h_large or d ** -0.25), ("small", h_small or d ** -0.5)):
        oracle = GaussianPotential(np.ones(d))
        K = max(1, round(T / h))
        params = MhmcParams(LeapfrogParams(T / K, K), lazy=True)
        _, records, _ = run_mhmc(np.zeros(d), oracle, params, n_proposals, gen)
        out[arm] = records
    return out
