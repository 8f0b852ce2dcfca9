"""scikit-learn style wrappers around the samplers.

The estimators follow the ``get_params``/``set_params`` conventions of
``sklearn.base.BaseEstimator``.  ``fit`` takes the target potential in
place of a data matrix, runs the sampler and stores the draws in
``samples_``; ``sample(n)`` draws a fresh batch, as ``KernelDensity.sample``
does.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_generator, check_scalar
from .core import PhasePoint
from .exceptions import ConfigurationError
from .integrators import LeapfrogParams, SCHEMES
from .potentials import PotentialOracle
from .samplers import (MhmcParams, ScheduleConstants, plan_two_phase, proximal_sampler, run_mhmc,
                       run_unadjusted, two_phase_sample)


def check_target(target) -> PotentialOracle:
    if not isinstance(target, PotentialOracle):
        raise ConfigurationError(f"target must be a PotentialOracle, got {type(target).__name__}")
    return target


def _initial_positions(x0, n_chains: int, d: int) -> np.ndarray:
    if x0 is None:
        return np.zeros((n_chains, d))
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape[-1] != d:
        raise ConfigurationError(f"x0 must have trailing dimension {d}")
    return np.array(np.broadcast_to(x0, (n_chains, d)))


class _SamplerBase(BaseEstimator):
    def _generator(self):
        if not hasattr(self, "_gen"):
            self._gen = as_generator(self.random_state)
        return self._gen

    def fit(self, target, x0=None):
        target = check_target(target)
        check_scalar(self.n_chains, "n_chains", min_val=1, integer=True)
        self._gen = as_generator(self.random_state)
        self.target_ = target
        self.n_features_in_ = target.d
        start = target.grad_queries
        self.samples_ = self._run(target, self.n_chains, x0)
        self.n_grad_queries_ = target.grad_queries - start
        return self

    def sample(self, n_samples: int = 1, x0=None) -> np.ndarray:
        """Draw ``n_samples`` new points (independent chains) from the fitted target."""
        check_is_fitted(self, "samples_")
        n_samples = check_scalar(n_samples, "n_samples", min_val=1, integer=True)
        return self._run(self.target_, n_samples, x0)


class TwoPhaseSampler(_SamplerBase):
    """Warm-start OBABCO followed by lazy Metropolised HMC.

    Parameters
    ----------
    q, eps : float
        Renyi order and target accuracy used to size the schedule.
    n_chains : int
        Number of independent chains run by ``fit``.
    c_w, c_n1, c_h2, c_n2 : float
        Schedule constants (see :class:`ScheduleConstants`).
    random_state : int, Generator or None
    """

    def __init__(self, q=2.0, eps=0.1, n_chains=1, c_w=1.0, c_n1=1.0, c_h2=1.0, c_n2=1.0, random_state=None):
        self.q = q
        self.eps = eps
        self.n_chains = n_chains
        self.c_w = c_w
        self.c_n1 = c_n1
        self.c_h2 = c_h2
        self.c_n2 = c_n2
        self.random_state = random_state

    def _run(self, target, n, x0):
        constants = ScheduleConstants(self.c_w, self.c_n1, self.c_h2, self.c_n2)
        self.plan_ = plan_two_phase(target.meta, target.d, self.q, self.eps, constants)
        result = two_phase_sample(self.plan_, target, self._generator(), n_chains=n,
                                  center=None if x0 is None else _initial_positions(x0, n, target.d))
        self.acceptance_rate_ = result.phase2_accept_rate
        return result.x


class MetropolisHMC(_SamplerBase):
    """Metropolised HMC with full momentum refresh (lazy by default)."""

    def __init__(self, step_size=0.1, n_leapfrog=10, n_steps=1000, lazy=True, n_chains=1, random_state=None):
        self.step_size = step_size
        self.n_leapfrog = n_leapfrog
        self.n_steps = n_steps
        self.lazy = lazy
        self.n_chains = n_chains
        self.random_state = random_state

    def _run(self, target, n, x0):
        params = MhmcParams(LeapfrogParams(self.step_size, self.n_leapfrog), lazy=bool(self.lazy))
        x, records, probs = run_mhmc(_initial_positions(x0, n, target.d), target, params, self.n_steps,
                                     self._generator())
        self.trajectory_ = records
        self.acceptance_rate_ = float(np.mean(probs)) if probs.size else math.nan
        return x


class UnadjustedLangevin(_SamplerBase):
    """Unadjusted kinetic Langevin sampler (OBABCO, OBABO or idealised OHO).

    ``friction=None`` selects sqrt(32 beta) from the target's constants.
    """

    def __init__(self, scheme="obabco", step_size=0.05, friction=None, n_steps=1000, n_chains=1,
                 random_state=None):
        self.scheme = scheme
        self.step_size = step_size
        self.friction = friction
        self.n_steps = n_steps
        self.n_chains = n_chains
        self.random_state = random_state

    def _run(self, target, n, x0):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        gamma = math.sqrt(32 * target.meta.beta) if self.friction is None else self.friction
        gen = self._generator()
        start = PhasePoint(_initial_positions(x0, n, target.d), gen.standard_normal((n, target.d)))
        point, records = run_unadjusted(self.scheme, start, target, self.step_size, gamma, self.n_steps, gen)
        self.trajectory_ = records
        return np.array(point.x)


class ProximalSampler(_SamplerBase):
    """Proximal sampler whose backward steps use the two-phase sampler."""

    def __init__(self, h_prox=None, n_outer=10, eps=0.1, q=2.0, n_chains=1, random_state=None):
        self.h_prox = h_prox
        self.n_outer = n_outer
        self.eps = eps
        self.q = q
        self.n_chains = n_chains
        self.random_state = random_state

    def _run(self, target, n, x0):
        result = proximal_sampler(target, None, self.h_prox, self.n_outer, self._generator(), n_chains=n,
                                  x0=x0, eps=self.eps, q=self.q)
        self.acceptance_rate_ = result.phase2_accept_rate
        return result.x
