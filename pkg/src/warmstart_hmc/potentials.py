"""Potential oracles with gradient-query accounting.

Every oracle exposes ``value``, ``grad``, ``hessian_apply`` and
``third_apply`` on arrays whose last axis is the dimension.  ``grad`` is the
only counted operation: one call is one gradient query, whatever the batch
size (a batched call is one query for each chain of the batch).
"""

from __future__ import annotations

import math
import threading

import numpy as np

from ._validation import as_float_array, check_scalar
from .core import RegularityMeta
from .exceptions import ConfigurationError, ConvergenceError, DomainError


class PotentialOracle:
    """Base class: subclasses implement ``_value``, ``_grad`` and friends."""

    meta: RegularityMeta
    d: int

    def __init__(self, d: int, meta: RegularityMeta):
        self.d = int(d)
        self.meta = meta
        self._queries = 0
        self._lock = threading.Lock()

    @property
    def grad_queries(self) -> int:
        return self._queries

    def reset_counter(self) -> None:
        with self._lock:
            self._queries = 0

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1:] != (self.d,):
            raise ConfigurationError(f"expected trailing dimension {self.d}, got shape {x.shape}")
        return x

    def value(self, x):
        return self._value(self._check(x))

    def grad(self, x) -> np.ndarray:
        with self._lock:
            self._queries += 1
        return self._grad(self._check(x))

    def hessian_apply(self, x, v) -> np.ndarray:
        return self._hessian_apply(self._check(x), np.asarray(v, dtype=np.float64))

    def third_apply(self, x, v, w) -> np.ndarray:
        """Third derivative contracted twice, returning the vector D^3V(x)[v, w, .]."""
        return self._third_apply(self._check(x), np.asarray(v, dtype=np.float64), np.asarray(w, dtype=np.float64))

    def _value(self, x):
        raise NotImplementedError

    def _grad(self, x):
        raise NotImplementedError

    def _hessian_apply(self, x, v):
        raise NotImplementedError

    def _third_apply(self, x, v, w):
        raise NotImplementedError


class GaussianPotential(PotentialOracle):
    """Diagonal quadratic V(x) = sum_i a_i x_i^2 / 2."""

    def __init__(self, spectrum):
        spectrum = as_float_array(spectrum, "spectrum")
        if spectrum.ndim != 1:
            raise ConfigurationError("spectrum must be one-dimensional")
        if np.any(spectrum <= 0):
            raise DomainError("spectrum must be strictly positive")
        self.spectrum = spectrum
        self.spectrum.setflags(write=False)
        meta = RegularityMeta(alpha=float(spectrum.min()), beta=float(spectrum.max()))
        super().__init__(spectrum.size, meta)

    def _value(self, x):
        return 0.5 * np.sum(self.spectrum * x * x, axis=-1)

    def _grad(self, x):
        return self.spectrum * x

    def _hessian_apply(self, x, v):
        return np.broadcast_to(self.spectrum, np.broadcast_shapes(x.shape, v.shape)) * v

    def _third_apply(self, x, v, w):
        return np.zeros(np.broadcast_shapes(x.shape, v.shape, w.shape))


class LogCoshPotential(PotentialOracle):
    """V(x) = a |x|^2 / 2 + b sum_i log cosh(c x_i).

    Strongly convex with alpha = a, beta = a + b c^2, and Hessian-Lipschitz
    and third-derivative constants b c^3.
    """

    def __init__(self, a: float, b: float, c: float, d: int):
        self.a = check_scalar(a, "a", min_val=0, strict_min=True)
        self.b = check_scalar(b, "b", min_val=0)
        self.c = check_scalar(c, "c", min_val=0)
        d = check_scalar(d, "d", min_val=1, integer=True)
        bc3 = self.b * self.c ** 3
        meta = RegularityMeta(alpha=self.a, beta=self.a + self.b * self.c ** 2, beta_h1=bc3, beta_h2=bc3)
        super().__init__(d, meta)

    @staticmethod
    def _logcosh(u):
        u = np.abs(u)
        return u + np.log1p(np.exp(-2.0 * u)) - math.log(2.0)

    def _value(self, x):
        return 0.5 * self.a * np.sum(x * x, axis=-1) + self.b * np.sum(self._logcosh(self.c * x), axis=-1)

    def _grad(self, x):
        return self.a * x + self.b * self.c * np.tanh(self.c * x)

    def _curvature(self, x):
        t = np.tanh(self.c * x)
        return self.a + self.b * self.c ** 2 * (1.0 - t * t)

    def _hessian_apply(self, x, v):
        return self._curvature(x) * v

    def third_diagonal(self, x) -> np.ndarray:
        """Diagonal entries of the (diagonal) third-derivative tensor at ``x``."""
        x = self._check(x)
        t = np.tanh(self.c * x)
        return -2.0 * self.b * self.c ** 3 * t * (1.0 - t * t)

    def _third_apply(self, x, v, w):
        return self.third_diagonal(x) * v * w


class ProximalShiftedOracle(PotentialOracle):
    """V(x) + |x - y|^2 / (2 h): the target of the backward proximal step.

    ``y`` may carry batch axes (one centre per chain).  Each gradient query
    here issues exactly one query to the base oracle.
    """

    def __init__(self, base: PotentialOracle, y, h_prox: float):
        self.base = base
        self.h_prox = check_scalar(h_prox, "h_prox", min_val=0, strict_min=True)
        y = np.asarray(y, dtype=np.float64)
        if y.shape[-1:] != (base.d,):
            raise ConfigurationError(f"centre must have trailing dimension {base.d}")
        self.y = y
        shift = 1.0 / self.h_prox
        meta = RegularityMeta(alpha=base.meta.alpha + shift, beta=base.meta.beta + shift,
                              beta_h1=base.meta.beta_h1, beta_h2=base.meta.beta_h2)
        super().__init__(base.d, meta)

    def _value(self, x):
        r = x - self.y
        return self.base.value(x) + 0.5 * np.sum(r * r, axis=-1) / self.h_prox

    def _grad(self, x):
        return self.base.grad(x) + (x - self.y) / self.h_prox

    def _hessian_apply(self, x, v):
        return self.base.hessian_apply(x, v) + v / self.h_prox

    def _third_apply(self, x, v, w):
        return self.base.third_apply(x, v, w)


def make_gaussian(spectrum) -> GaussianPotential:
    """Quadratic potential with the given (positive) Hessian eigenvalues."""
    return GaussianPotential(spectrum)


def make_logcosh_perturbed(a: float, b: float, c: float, d: int) -> LogCoshPotential:
    """Quadratic plus a separable log-cosh perturbation."""
    return LogCoshPotential(a, b, c, d)


def proximal_shift(base: PotentialOracle, y, h_prox: float) -> ProximalShiftedOracle:
    return ProximalShiftedOracle(base, y, h_prox)


def proximal_oracle(shifted: PotentialOracle, tol: float = 1e-10, x0=None,
                    max_iter: int = 1_000_000) -> np.ndarray:
    """Minimise a strongly convex oracle by gradient descent with step 1/beta.

    Returns the minimiser (batched if the oracle is); iteration stops when
    every chain has gradient norm at most ``tol``.

    Raises:
        ConvergenceError: after ``max_iter`` iterations without convergence.
    """
    tol = check_scalar(tol, "tol", min_val=0, strict_min=True)
    if x0 is None:
        x0 = getattr(shifted, "y", np.zeros(shifted.d))
    x = np.array(x0, dtype=np.float64, copy=True)
    step = 1.0 / shifted.meta.beta
    for _ in range(max_iter):
        g = shifted.grad(x)
        if np.max(np.linalg.norm(g, axis=-1)) <= tol:
            return x
        x = x - step * g
    raise ConvergenceError(f"gradient descent did not reach tol={tol} in {max_iter} iterations")


def finite_difference_grad(oracle: PotentialOracle, x, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of ``oracle.value`` at a single point."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        out[i] = (oracle.value(x + e) - oracle.value(x - e)) / (2 * eps)
    return out
