"""Metropolised and unadjusted HMC samplers and the two-phase warm-start pipeline.

All samplers run a batch of independent chains in lock step.  Gradient
queries are counted per oracle call, so a batched run reports the number
of queries spent by each chain.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

from ._validation import as_generator, check_scalar
from .core import PhasePoint, RegularityMeta, kinetic_energy
from .exceptions import ConfigurationError, UnsupportedTargetError
from .gaussian_exact import GaussianPhaseLaw, affine_of_scheme
from .integrators import (BLOWUP_THRESHOLD, FrictionParams, LeapfrogParams, hamiltonian_flow_for,
                          leapfrog_arrays, obabco_arrays, obabo_arrays, oho_arrays)
from .potentials import PotentialOracle, ProximalShiftedOracle, proximal_oracle

logger = logging.getLogger(__name__)

RECORD_FIELDS = ("iter", "grad_queries", "accepted", "norm_x", "hamiltonian", "divergence", "accept_prob")


@dataclass(frozen=True)
class MhmcParams:
    leapfrog: LeapfrogParams
    lazy: bool = True


@dataclass(frozen=True)
class ChainRecord:
    """One row of a trajectory.

    For a batch of chains ``accepted`` and ``accept_prob`` are averaged over
    chains and ``norm_x`` and ``hamiltonian`` are chain means.
    """

    iter: int
    grad_queries: int
    accepted: float
    norm_x: float
    hamiltonian: float
    divergence: float | None = None
    accept_prob: float | None = None

    def as_row(self) -> dict:
        return asdict(self)


def _record(it, oracle, x, p, accepted, divergence=None, accept_prob=None, energy=None) -> ChainRecord:
    if energy is None:
        energy = oracle.value(x) + kinetic_energy(p)
    return ChainRecord(
        iter=int(it),
        grad_queries=int(oracle.grad_queries),
        accepted=float(np.mean(accepted)),
        norm_x=float(np.mean(np.linalg.norm(x, axis=-1))),
        hamiltonian=float(np.mean(energy)),
        divergence=None if divergence is None else float(divergence),
        accept_prob=None if accept_prob is None else float(np.mean(accept_prob)),
    )


# ---------------------------------------------------------------------------
# Metropolised HMC
# ---------------------------------------------------------------------------

def _mhmc_arrays(x, g, oracle, params: MhmcParams, gen: np.random.Generator, flow: Callable | None = None):
    """One MHMC transition for a batch.  ``g`` is the cached gradient at ``x``.

    Returns ``(x, g, accepted, accept_prob, energy)`` where ``energy`` is
    the Hamiltonian of the kept state (proposal end if accepted, start with
    the fresh momentum otherwise).
    """
    p = gen.standard_normal(x.shape)
    u = gen.random(x.shape[:-1])
    h_old = oracle.value(x) + kinetic_energy(p)
    lf = params.leapfrog
    with np.errstate(over="ignore", invalid="ignore"):
        if flow is None:
            x_new, p_new, g_new = leapfrog_arrays(x, p, oracle, lf.h, lf.K, grad_x=g, check=False)
        else:
            x_new, p_new = flow(x, p, lf.T)
            g_new = None
        h_new = oracle.value(x_new) + kinetic_energy(p_new)
        blown = ~np.all(np.isfinite(x_new) & (np.abs(x_new) <= BLOWUP_THRESHOLD), axis=-1)
        blown |= ~np.all(np.isfinite(p_new) & (np.abs(p_new) <= BLOWUP_THRESHOLD), axis=-1)
        delta = np.asarray(h_new - h_old, dtype=np.float64)
        prob = np.where(delta <= 0, 1.0, np.exp(-np.where(np.isnan(delta), np.inf, delta)))
    prob = np.where(blown | np.isnan(delta), 0.0, prob)
    if params.lazy:
        prob = 0.5 * prob
    accepted = u < prob
    x_out = np.where(accepted[..., None], x_new, x)
    if g_new is not None:
        g_out = np.where(accepted[..., None], g_new, g)
    else:
        g_out = g
    energy = np.where(accepted, h_new, h_old)
    return x_out, g_out, accepted, prob, energy


def mhmc_step(point: PhasePoint, oracle, params: MhmcParams, rng, flow: Callable | None = None):
    """One (lazy) Metropolised HMC step with full momentum refresh.

    The incoming momentum is discarded.  A numerically blown-up proposal is
    rejected.  Passing ``flow(x, p, t)`` replaces the leapfrog integrator
    (for example by the exact flow).

    Returns:
        ``(PhasePoint, accepted)`` where ``accepted`` is a bool (per chain).
    """
    gen = as_generator(rng)
    x = np.asarray(point.x)
    g = oracle.grad(x) if flow is None else np.zeros_like(x)
    x_new, _, accepted, _, _ = _mhmc_arrays(x, g, oracle, params, gen, flow)
    acc = bool(accepted) if np.ndim(accepted) == 0 else accepted
    return PhasePoint(x_new, np.zeros_like(x_new)), acc


def run_mhmc(x0, oracle, params: MhmcParams, n_steps: int, rng, *, record: bool = True,
             record_every: int = 1, flow: Callable | None = None, stop: Callable | None = None,
             on_step: Callable | None = None):
    """Run ``n_steps`` MHMC transitions from position(s) ``x0``.

    ``stop(record)`` may end the run early; ``on_step(iteration, x)`` sees
    every state.

    Returns:
        ``(x_final, records, accept_probs)`` with ``accept_probs`` of shape
        ``(n_done, *batch)``.
    """
    n_steps = check_scalar(n_steps, "n_steps", min_val=0, integer=True)
    gen = as_generator(rng)
    x = np.array(x0, dtype=np.float64)
    g = oracle.grad(x) if flow is None else np.zeros_like(x)
    records = []
    probs = []
    if record:
        records.append(_record(0, oracle, x, np.zeros_like(x), np.zeros(x.shape[:-1])))
    for it in range(1, n_steps + 1):
        x, g, accepted, prob, energy = _mhmc_arrays(x, g, oracle, params, gen, flow)
        probs.append(prob)
        if on_step is not None:
            on_step(it, x)
        if record and (it % record_every == 0 or it == n_steps):
            rec = _record(it, oracle, x, None, accepted, accept_prob=prob, energy=energy)
            records.append(rec)
            if stop is not None and stop(rec):
                break
    return x, records, np.array(probs)


# ---------------------------------------------------------------------------
# unadjusted kinetic Langevin
# ---------------------------------------------------------------------------

def run_unadjusted(scheme: str, init, oracle, h: float, gamma: float, n_steps: int, rng, *,
                   n_chains: int = 1, record: bool = True, record_every: int = 1,
                   flow: Callable | None = None, stop: Callable | None = None):
    """Run an unadjusted scheme (``"obabco"``, ``"obabo"`` or ``"oho"``).

    Args:
        init: a :class:`PhasePoint` (possibly batched) or a
            :class:`GaussianPhaseLaw` from which ``n_chains`` points are drawn.
            With a Gaussian law on a diagonal Gaussian target the exact law is
            propagated alongside and its R_2 to the target is recorded.
        stop: optional predicate on the latest :class:`ChainRecord`.

    Returns:
        ``(PhasePoint, records)``.
    """
    n_steps = check_scalar(n_steps, "n_steps", min_val=0, integer=True)
    gen = as_generator(rng)
    fp = FrictionParams(gamma, h)
    law = None
    if isinstance(init, GaussianPhaseLaw):
        x, p = init.sample(n_chains, gen)
        if getattr(oracle, "spectrum", None) is not None:
            law = init.copy()
            law_maps = affine_of_scheme(scheme, law.spectrum, h, gamma)
    else:
        x, p = np.array(init.x), np.array(init.p)
    if scheme == "oho":
        flow = flow or hamiltonian_flow_for(oracle)
    elif scheme not in ("obabco", "obabo"):
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    records = []
    if record:
        records.append(_record(0, oracle, x, p, np.ones(x.shape[:-1]),
                               divergence=None if law is None else law.divergence(2.0)))
    g = None
    for it in range(1, n_steps + 1):
        xi1 = gen.standard_normal(p.shape)
        xi2 = gen.standard_normal(p.shape)
        if scheme == "obabco":
            x, p = obabco_arrays(x, p, oracle, h, fp, xi1, xi2)
        elif scheme == "obabo":
            x, p, g = obabo_arrays(x, p, oracle, h, fp, xi1, xi2, grad_x=g)
        else:
            x, p = oho_arrays(x, p, flow, h, fp, xi1, xi2)
        if law is not None:
            law.apply(*law_maps)
        if record and (it % record_every == 0 or it == n_steps):
            rec = _record(it, oracle, x, p, np.ones(x.shape[:-1]),
                          divergence=None if law is None else law.divergence(2.0))
            records.append(rec)
            if stop is not None and stop(rec):
                break
    return PhasePoint(x, p), records


# ---------------------------------------------------------------------------
# two-phase warm start
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScheduleConstants:
    """Absolute constants of the two-phase schedule.

    ``polylog`` freezes the logarithmic factor of the phase-one step size;
    by default it is ``log(e + kappa d) ** log_power``.
    """

    c_w: float = 1.0
    c_n1: float = 1.0
    c_h2: float = 1.0
    c_n2: float = 1.0
    log_power: float = 0.5
    polylog: float | None = None


@dataclass(frozen=True)
class TwoPhasePlan:
    """Resolved schedule: OBABCO warm start, then lazy MHMC."""

    h1: float
    N1: int
    gamma: float
    h2: float
    K2: int
    N2: int
    d: int
    q: float
    eps: float
    meta: RegularityMeta
    constants: ScheduleConstants = field(default_factory=ScheduleConstants)

    @property
    def predicted_grad_queries(self) -> int:
        # two per OBABCO step, one to seed phase two, K2 per MHMC proposal
        return 2 * self.N1 + 1 + self.N2 * self.K2

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("h1", "N1", "gamma", "h2", "K2", "N2", "d", "q", "eps")}
        out["predicted_grad_queries"] = self.predicted_grad_queries
        return out


def plan_two_phase(meta: RegularityMeta, d: int, q: float = 2.0, eps: float = 0.1,
                   constants: ScheduleConstants | None = None) -> TwoPhasePlan:
    """Resolve step sizes and iteration counts for the two-phase sampler.

    Raises:
        UnsupportedTargetError: for alpha = 0 (use :func:`proximal_sampler`).
    """
    c = constants or ScheduleConstants()
    if meta.alpha <= 0:
        raise UnsupportedTargetError("plan_two_phase needs alpha > 0; wrap the target with proximal_sampler")
    d = check_scalar(d, "d", min_val=1, integer=True)
    q = check_scalar(q, "q", min_val=1)
    eps = check_scalar(eps, "eps", min_val=0, strict_min=True, max_val=1)
    if eps >= 1:
        raise ConfigurationError("eps must be < 1")
    alpha, beta, kappa = meta.alpha, meta.beta, meta.kappa
    root_d = d ** 0.25
    polylog = c.polylog if c.polylog is not None else math.log(math.e + kappa * d) ** c.log_power
    inv_h1 = (math.sqrt(beta * kappa) + math.sqrt(meta.beta_h2) / alpha ** 0.25) * root_d * polylog
    h1 = c.c_w / inv_h1
    n1 = math.ceil(c.c_n1 * (math.sqrt(beta) / alpha) * math.log(max(kappa * d * q, math.e)) / h1)
    gamma = math.sqrt(32.0 * beta)
    log_eps = math.log(1.0 / eps)
    scale2 = math.sqrt(beta) + meta.beta_h2 ** (1.0 / 3.0)
    h2 = 1.0 / (c.c_h2 * scale2 * root_d * log_eps)
    k2 = max(1, math.ceil(1.0 / (scale2 * h2)))
    n2 = max(1, math.ceil(c.c_n2 * (kappa + meta.kappa_h2 ** (2.0 / 3.0)) * log_eps))
    return TwoPhasePlan(h1=h1, N1=n1, gamma=gamma, h2=h2, K2=k2, N2=n2, d=d, q=q, eps=eps, meta=meta,
                        constants=c)


@dataclass
class SampleResult:
    """Output of a sampler run."""

    x: np.ndarray
    records: list
    grad_queries: int
    phase2_accept_rate: float = float("nan")
    extra: dict = field(default_factory=dict)


def two_phase_sample(plan: TwoPhasePlan, oracle: PotentialOracle, rng, *, n_chains: int | None = None,
                     center=None, record: bool = False) -> SampleResult:
    """Two-phase sampler: OBABCO warm start then lazy MHMC.

    Phase one starts from N(center, I/beta) x N(0, I) and runs ``plan.N1``
    OBABCO steps with friction ``plan.gamma``; phase two runs ``plan.N2``
    lazy MHMC proposals, each of ``plan.K2`` leapfrog steps of size
    ``plan.h2``.  ``center`` (default the origin) may be batched, in which
    case it fixes the number of chains.
    """
    gen = as_generator(rng)
    d = oracle.d
    if center is None:
        center = np.zeros((n_chains, d)) if n_chains is not None else np.zeros(d)
    center = np.asarray(center, dtype=np.float64)
    if n_chains is not None and center.ndim == 1:
        center = np.broadcast_to(center, (n_chains, d))
    start = oracle.grad_queries
    x = center + gen.standard_normal(center.shape) / math.sqrt(plan.meta.beta)
    p = gen.standard_normal(center.shape)
    fp = FrictionParams(plan.gamma, plan.h1)
    records = []
    for it in range(plan.N1):
        xi1 = gen.standard_normal(p.shape)
        xi2 = gen.standard_normal(p.shape)
        x, p = obabco_arrays(x, p, oracle, plan.h1, fp, xi1, xi2)
        if record:
            records.append(_record(it + 1, oracle, x, p, np.ones(x.shape[:-1])))
    params = MhmcParams(LeapfrogParams(plan.h2, plan.K2), lazy=True)
    x, rec2, probs = run_mhmc(x, oracle, params, plan.N2, gen, record=record)
    if record:
        offset = plan.N1
        records.extend(ChainRecord(**{**r.as_row(), "iter": r.iter + offset}) for r in rec2[1:])
    rate = float(np.mean(probs)) if probs.size else float("nan")
    logger.debug("two-phase run: N1=%d N2=%d acceptance=%.3f", plan.N1, plan.N2, rate)
    return SampleResult(x=x, records=records, grad_queries=oracle.grad_queries - start, phase2_accept_rate=rate)


def proximal_sampler(base: PotentialOracle, plan_factory: Callable | None = None, h_prox: float | None = None,
                     n_outer: int = 10, rng=None, *, n_chains: int | None = None, x0=None,
                     eps: float = 0.1, q: float = 2.0, tol: float = 1e-10) -> SampleResult:
    """Proximal sampler alternating Gaussian forward and RGO backward steps.

    Forward: y ~ N(x, h_prox I).  Backward: sample the shifted target
    V(x) + |x - y|^2 / (2 h_prox) by recentring at its minimiser and running
    :func:`two_phase_sample`.  ``plan_factory(meta, d)`` builds the inner
    plan; the default targets accuracy eps^2 / kappa for each backward step.
    """
    gen = as_generator(rng)
    beta = base.meta.beta
    h_prox = 1.0 / (2.0 * beta) if h_prox is None else check_scalar(h_prox, "h_prox", min_val=0, strict_min=True)
    kappa = base.meta.kappa if base.meta.alpha > 0 else 1.0 / (beta * h_prox)
    if plan_factory is None:
        inner_eps = min(eps * eps / max(kappa, 1.0), 0.5)
        plan_factory = lambda meta, d: plan_two_phase(meta, d, q, inner_eps)  # noqa: E731
    shape = (n_chains, base.d) if n_chains is not None else (base.d,)
    x = np.zeros(shape) if x0 is None else np.array(np.broadcast_to(x0, shape), dtype=np.float64)
    start = base.grad_queries
    rates = []
    for _ in range(int(n_outer)):
        y = x + math.sqrt(h_prox) * gen.standard_normal(x.shape)
        x, rate = rgo_sample(base, y, h_prox, plan_factory, gen, tol)
        rates.append(rate)
    return SampleResult(x=x, records=[], grad_queries=base.grad_queries - start,
                        phase2_accept_rate=float(np.mean(rates)) if rates else float("nan"))


def rgo_sample(base: PotentialOracle, y, h_prox: float, plan_factory: Callable, rng, tol: float = 1e-10):
    """One backward (restricted Gaussian oracle) step from centre(s) ``y``.

    Returns ``(x, phase_two_acceptance)``.
    """
    shifted = ProximalShiftedOracle(base, y, h_prox)
    x_star = proximal_oracle(shifted, tol)
    plan = plan_factory(shifted.meta, base.d)
    result = two_phase_sample(plan, shifted, rng, center=x_star)
    return result.x, result.phase2_accept_rate
