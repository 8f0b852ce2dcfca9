"""Shared value types, random streams and Gaussian divergences.

Everything here works in float64. Phase-space arrays may carry leading
batch axes: a position of shape ``(n_chains, d)`` is a batch of ``n_chains``
independent chains in dimension ``d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_float_array
from .exceptions import ConfigurationError, DomainError


class _InfiniteDivergence(float):
    """Marker for a divergence that is infinite because the integral diverges.

    It compares equal to ``math.inf`` but can be told apart from an overflow
    with :func:`is_infinite_divergence`.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls, math.inf)
        return cls._instance

    def __repr__(self) -> str:
        return "INFINITE_DIVERGENCE"

    def __reduce__(self):
        return (_InfiniteDivergence, ())


INFINITE_DIVERGENCE = _InfiniteDivergence()


def is_infinite_divergence(value) -> bool:
    """True iff ``value`` is the structural infinity sentinel."""
    return value is INFINITE_DIVERGENCE


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PhasePoint:
    """Immutable position/momentum pair.

    ``x`` and ``p`` share a shape whose last axis is the dimension; leading
    axes index independent chains.
    """

    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        p = np.asarray(self.p, dtype=np.float64)
        if x.ndim < 1 or x.shape != p.shape:
            raise ConfigurationError(f"position {x.shape} and momentum {p.shape} must share a shape of rank >= 1")
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "p", _readonly(p))

    @property
    def dim(self) -> int:
        return self.x.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.x.shape[:-1]

    def replace(self, x=None, p=None) -> "PhasePoint":
        return PhasePoint(self.x if x is None else x, self.p if p is None else p)


@dataclass(frozen=True)
class RegularityMeta:
    """Regularity constants of a potential.

    Attributes:
        alpha: strong convexity (0 allowed for merely convex targets).
        beta: gradient Lipschitz constant.
        beta_h1: Hessian Lipschitz constant in Frobenius norm.
        beta_h2: bound on the third derivative in the {1,2},{3} tensor norm.
    """

    alpha: float
    beta: float
    beta_h1: float = 0.0
    beta_h2: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "beta_h1", "beta_h2"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise ConfigurationError(f"{name} must be finite and non-negative, got {value}")
            object.__setattr__(self, name, value)
        if self.beta <= 0:
            raise ConfigurationError("beta must be positive")
        if self.alpha > self.beta * (1 + 1e-12):
            raise ConfigurationError(f"alpha={self.alpha} exceeds beta={self.beta}")

    @property
    def kappa(self) -> float:
        return self.beta / self.alpha if self.alpha > 0 else math.inf

    @property
    def kappa_h2(self) -> float:
        return self.beta_h2 / self.alpha ** 1.5 if self.alpha > 0 else math.inf


@dataclass(frozen=True)
class RngStream:
    """Reproducible, splittable random stream.

    Streams with the same ``seed`` and different ``stream_id`` paths are
    statistically independent (``numpy.random.SeedSequence`` spawn keys).
    """

    seed: int
    stream_id: tuple = field(default=())

    def __post_init__(self):
        sid = self.stream_id
        if isinstance(sid, (int, np.integer)):
            sid = (int(sid),)
        object.__setattr__(self, "stream_id", tuple(int(s) for s in sid))
        object.__setattr__(self, "seed", int(self.seed))

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + (int(index),))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=self.stream_id)
        return np.random.Generator(np.random.PCG64(seq))


def kinetic_energy(p: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(np.square(p), axis=-1)


def hamiltonian(point: PhasePoint, oracle) -> np.ndarray | float:
    """Total energy V(x) + |p|^2 / 2 (one value per chain)."""
    value = oracle.value(point.x) + kinetic_energy(point.p)
    return float(value) if np.ndim(value) == 0 else value


# ---------------------------------------------------------------------------
# Gaussian Renyi divergence
# ---------------------------------------------------------------------------

def _unpack_law(law):
    if hasattr(law, "mean") and hasattr(law, "cov"):
        mean, cov = law.mean, law.cov
    else:
        mean, cov = law
    mean = as_float_array(mean, "mean")
    cov = as_float_array(cov, "covariance", ndim_min=2)
    if cov.shape[-2:] != (mean.shape[-1], mean.shape[-1]):
        raise ConfigurationError(f"covariance shape {cov.shape} does not match mean shape {mean.shape}")
    return mean, cov


def _check_pd(cov: np.ndarray, name: str) -> None:
    if not np.allclose(cov, np.swapaxes(cov, -1, -2), rtol=1e-10, atol=1e-14):
        raise DomainError(f"{name} covariance is not symmetric")
    if np.any(np.linalg.eigvalsh(cov) <= 0):
        raise DomainError(f"{name} covariance is not positive definite")


def renyi_gaussian_stacked(q: float, mean1, cov1, mean2, cov2) -> np.ndarray:
    """Renyi divergence of order ``q`` for stacks of Gaussian pairs.

    Leading axes broadcast; the result has the broadcast batch shape and
    holds ``inf`` wherever the order-``q`` mixture ``q cov2 + (1 - q) cov1``
    is not positive definite.  ``q == 1`` gives the Kullback-Leibler limit.
    Covariances are assumed positive definite (checked by callers).
    """
    if q < 1:
        raise DomainError(f"order q={q} < 1 is not supported")
    diff = np.asarray(mean1, dtype=np.float64) - np.asarray(mean2, dtype=np.float64)
    cov1 = np.asarray(cov1, dtype=np.float64)
    cov2 = np.asarray(cov2, dtype=np.float64)
    _, logdet1 = np.linalg.slogdet(cov1)
    _, logdet2 = np.linalg.slogdet(cov2)
    if q == 1:
        n = cov1.shape[-1]
        trace = np.trace(np.linalg.solve(cov2, cov1), axis1=-2, axis2=-1)
        maha = np.sum(diff * np.linalg.solve(cov2, diff[..., None])[..., 0], axis=-1)
        return 0.5 * (trace - n + maha + logdet2 - logdet1)
    mix = q * cov2 + (1.0 - q) * cov1
    mix = 0.5 * (mix + np.swapaxes(mix, -1, -2))
    eig = np.linalg.eigvalsh(mix)
    ok = np.all(eig > 0, axis=-1)
    safe = np.where(ok[..., None, None], mix, np.eye(mix.shape[-1]))
    _, logdet_mix = np.linalg.slogdet(safe)
    maha = np.sum(diff * np.linalg.solve(safe, diff[..., None])[..., 0], axis=-1)
    value = 0.5 * q * maha - (logdet_mix - (1.0 - q) * logdet1 - q * logdet2) / (2.0 * (q - 1.0))
    return np.where(ok, value, np.inf)


def renyi_gaussian(q: float, law1, law2) -> float:
    """Renyi divergence R_q(law1 || law2) between two Gaussians.

    Each law is a ``(mean, cov)`` pair or an object with ``mean`` and
    ``cov`` attributes.  When the order-``q`` mixture is not positive
    definite the divergence is infinite and :data:`INFINITE_DIVERGENCE`
    is returned.

    Raises:
        DomainError: if ``q < 1`` or a covariance is not positive definite.
    """
    q = float(q)
    if not q >= 1:
        raise DomainError(f"order q={q} < 1 is not supported")
    m1, s1 = _unpack_law(law1)
    m2, s2 = _unpack_law(law2)
    if m1.shape != m2.shape or m1.ndim != 1:
        raise ConfigurationError("laws must be single Gaussians of equal dimension")
    _check_pd(s1, "first")
    _check_pd(s2, "second")
    value = float(renyi_gaussian_stacked(q, m1, s1, m2, s2))
    if math.isinf(value):
        return INFINITE_DIVERGENCE
    return max(value, 0.0)


def chi_squared_gaussian(law1, law2) -> float:
    """Chi-squared divergence, exp(R_2) - 1."""
    r2 = renyi_gaussian(2.0, law1, law2)
    if is_infinite_divergence(r2):
        return INFINITE_DIVERGENCE
    return math.expm1(r2) if r2 < 709 else math.inf


def initialization_renyi_bound(meta: RegularityMeta, d: int) -> float:
    """Upper bound (d/2) log(kappa) on R_inf(N(0, I/beta) || target)."""
    if d < 1:
        raise ConfigurationError("dimension must be positive")
    if meta.alpha == 0:
        return INFINITE_DIVERGENCE
    return 0.5 * d * math.log(meta.kappa)
