"""Hamiltonian and kinetic-Langevin integrators.

Array-level kernels (``*_arrays``) work on position/momentum arrays with
optional leading batch axes and take the Gaussian noise explicitly, so two
integrators can be driven by the same draws (synchronous coupling).  The
``*_step`` wrappers accept and return :class:`PhasePoint` values.

Noise order convention: every O-containing scheme consumes two standard
normal arrays per step, the first for the leading O and the second for the
trailing O.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._validation import as_generator, check_scalar
from .core import PhasePoint
from .exceptions import ConfigurationError, NumericalBlowupError, ReferenceAccuracyError, ShootingError

BLOWUP_THRESHOLD = 1e12


@dataclass(frozen=True)
class LeapfrogParams:
    """Leapfrog step size ``h`` and number of steps ``K``; ``T = K h``."""

    h: float
    K: int

    def __post_init__(self):
        object.__setattr__(self, "h", check_scalar(self.h, "h", min_val=0, strict_min=True))
        object.__setattr__(self, "K", check_scalar(self.K, "K", min_val=1, integer=True))

    @property
    def T(self) -> float:
        return self.h * self.K


@dataclass(frozen=True)
class FrictionParams:
    """Friction ``gamma`` and step ``h`` of a half O step."""

    gamma: float
    h: float

    def __post_init__(self):
        object.__setattr__(self, "gamma", check_scalar(self.gamma, "gamma", min_val=0))
        object.__setattr__(self, "h", check_scalar(self.h, "h", min_val=0, strict_min=True))

    @property
    def decay(self) -> float:
        return math.exp(-0.5 * self.gamma * self.h)

    @property
    def noise_scale(self) -> float:
        return math.sqrt(-math.expm1(-self.gamma * self.h))


def _blown(*arrays) -> bool:
    for a in arrays:
        if not np.all(np.isfinite(a)) or np.max(np.abs(a), initial=0.0) > BLOWUP_THRESHOLD:
            return True
    return False


def draw_noise(rng, shape) -> tuple[np.ndarray, np.ndarray]:
    """Two standard normal arrays in the fixed (first O, second O) order."""
    gen = as_generator(rng)
    return gen.standard_normal(shape), gen.standard_normal(shape)


def o_arrays(p, fp: FrictionParams, xi) -> np.ndarray:
    return fp.decay * p + fp.noise_scale * xi


def o_step(p, fp: FrictionParams, rng) -> np.ndarray:
    """Exact Ornstein-Uhlenbeck refresh of the momentum over time h/2."""
    p = np.asarray(p, dtype=np.float64)
    return o_arrays(p, fp, as_generator(rng).standard_normal(p.shape))


# ---------------------------------------------------------------------------
# deterministic Hamiltonian maps
# ---------------------------------------------------------------------------

def leapfrog_arrays(x, p, oracle, h: float, K: int, grad_x=None, *, check: bool = True):
    """K leapfrog steps.  Returns ``(x, p, grad_at_x)``.

    With ``grad_x`` supplied (the cached gradient at ``x``) this costs K
    gradient queries, otherwise K + 1.
    """
    g = oracle.grad(x) if grad_x is None else grad_x
    half = 0.5 * h
    for k in range(K):
        p = p - half * g
        x = x + h * p
        g = oracle.grad(x)
        p = p - half * g
        if check and _blown(x, p):
            raise NumericalBlowupError("leapfrog trajectory diverged", k + 1)
    return x, p, g


def leapfrog_flow(point: PhasePoint, oracle, params: LeapfrogParams) -> PhasePoint:
    """Apply ``params.K`` leapfrog steps of size ``params.h``.

    Raises:
        NumericalBlowupError: if a coordinate exceeds 1e12 in magnitude.
    """
    x, p, _ = leapfrog_arrays(point.x, point.p, oracle, params.h, params.K)
    return PhasePoint(x, p)


def exact_flow_arrays(x, p, spectrum, t: float):
    omega = np.sqrt(np.asarray(spectrum, dtype=np.float64))
    c = np.cos(omega * t)
    s = np.sin(omega * t)
    return x * c + p * (s / omega), p * c - x * (omega * s)


def exact_hamiltonian_flow(point: PhasePoint, spectrum, t: float) -> PhasePoint:
    """Closed-form flow of V = sum a_i x_i^2 / 2: a rotation per mode."""
    return PhasePoint(*exact_flow_arrays(point.x, point.p, spectrum, t))


def _richardson(x, p, oracle, t: float, n: int, prev_fine=None):
    """Leapfrog at n and 2n steps combined to cancel the h^2 error term."""
    coarse = prev_fine if prev_fine is not None else leapfrog_arrays(x, p, oracle, t / n, n)[:2]
    fine = leapfrog_arrays(x, p, oracle, t / (2 * n), 2 * n)[:2]
    ext = tuple((4.0 * f - c) / 3.0 for f, c in zip(fine, coarse))
    return ext, fine


def reference_flow_arrays(x, p, oracle, t: float, refine: int = 64, rtol: float = 1e-9,
                          max_doublings: int = 12):
    """Richardson-extrapolated fine leapfrog, certified by step doubling."""
    if refine < 64:
        raise ConfigurationError("refine must be at least 64")
    if t == 0:
        return np.array(x, dtype=np.float64), np.array(p, dtype=np.float64)
    n = int(refine)
    prev, fine = _richardson(x, p, oracle, t, n)
    for _ in range(max_doublings):
        n *= 2
        ext, fine = _richardson(x, p, oracle, t, n, prev_fine=fine)
        change = np.sqrt(np.sum((ext[0] - prev[0]) ** 2 + (ext[1] - prev[1]) ** 2, axis=-1))
        scale = np.maximum(1.0, np.sqrt(np.sum(ext[0] ** 2 + ext[1] ** 2, axis=-1)))
        if np.all(change <= rtol * scale):
            return ext
        prev = ext
    raise ReferenceAccuracyError(f"reference flow did not reach rtol={rtol} after {max_doublings} doublings")


def reference_hamiltonian_flow(point: PhasePoint, oracle, t: float, refine: int = 64,
                               rtol: float = 1e-9) -> PhasePoint:
    """High-accuracy Hamiltonian flow for potentials without a closed form.

    Raises:
        ReferenceAccuracyError: if refinement fails to certify ``rtol``.
    """
    return PhasePoint(*reference_flow_arrays(point.x, point.p, oracle, t, refine, rtol))


def hamiltonian_flow_for(oracle, refine: int = 64) -> Callable:
    """Return ``flow(x, p, t)`` using the closed form when one exists."""
    spectrum = getattr(oracle, "spectrum", None)
    if spectrum is not None:
        return lambda x, p, t: exact_flow_arrays(x, p, spectrum, t)
    return lambda x, p, t: reference_flow_arrays(x, p, oracle, t, refine)


# ---------------------------------------------------------------------------
# kinetic Langevin schemes
# ---------------------------------------------------------------------------

def obabco_arrays(x, p, oracle, h: float, fp: FrictionParams, xi1, xi2, grad_x=None):
    """One OBABCO step; returns ``(x, p)``.  Costs two gradient queries
    (one if ``grad_x`` is the cached gradient at ``x``)."""
    p_o = o_arrays(p, fp, xi1)
    g0 = oracle.grad(x) if grad_x is None else grad_x
    p_ob = p_o - 0.5 * h * g0
    x_oba = x + h * p_ob
    g1 = oracle.grad(x_oba)
    p_obab = p_ob - 0.5 * h * g1
    # cubic-order position correction reusing the gradient at the start
    x_c = x + (h / 3.0) * (p_obab + 2.0 * p_ob) + (h * h / 6.0) * g0
    return x_c, o_arrays(p_obab, fp, xi2)


def obabo_arrays(x, p, oracle, h: float, fp: FrictionParams, xi1, xi2, grad_x=None):
    """One OBABO step; returns ``(x, p, grad_at_new_x)``."""
    p_o = o_arrays(p, fp, xi1)
    g0 = oracle.grad(x) if grad_x is None else grad_x
    p_ob = p_o - 0.5 * h * g0
    x_new = x + h * p_ob
    g1 = oracle.grad(x_new)
    p_obab = p_ob - 0.5 * h * g1
    return x_new, o_arrays(p_obab, fp, xi2), g1


def oho_arrays(x, p, flow: Callable, h: float, fp: FrictionParams, xi1, xi2):
    """O, exact Hamiltonian flow for time h, O."""
    x_new, p_new = flow(x, o_arrays(p, fp, xi1), h)
    return x_new, o_arrays(p_new, fp, xi2)


def _noise_for(point: PhasePoint, rng, noise):
    if noise is not None:
        return noise
    return draw_noise(rng, point.p.shape)


def obabco_step(point: PhasePoint, oracle, h: float, gamma: float, rng=None, noise=None) -> PhasePoint:
    """OBABCO: O, B, A, B, position correction C, O."""
    fp = FrictionParams(gamma, h)
    xi1, xi2 = _noise_for(point, rng, noise)
    x, p = obabco_arrays(point.x, point.p, oracle, h, fp, xi1, xi2)
    if _blown(x, p):
        raise NumericalBlowupError("OBABCO step diverged", 1)
    return PhasePoint(x, p)


def obabo_step(point: PhasePoint, oracle, h: float, gamma: float, rng=None, noise=None) -> PhasePoint:
    """OBABO: half O, leapfrog step, half O."""
    fp = FrictionParams(gamma, h)
    xi1, xi2 = _noise_for(point, rng, noise)
    x, p, _ = obabo_arrays(point.x, point.p, oracle, h, fp, xi1, xi2)
    if _blown(x, p):
        raise NumericalBlowupError("OBABO step diverged", 1)
    return PhasePoint(x, p)


def oho_step(point: PhasePoint, oracle, h: float, gamma: float, rng=None, noise=None,
             flow: Callable | None = None) -> PhasePoint:
    """Idealised OHO step; exact flow for quadratics, reference flow otherwise."""
    fp = FrictionParams(gamma, h)
    xi1, xi2 = _noise_for(point, rng, noise)
    flow = flow or hamiltonian_flow_for(oracle)
    return PhasePoint(*oho_arrays(point.x, point.p, flow, h, fp, xi1, xi2))


SCHEMES = {"obabco", "obabo", "oho"}


def scheme_step_arrays(scheme: str, x, p, oracle, h: float, fp: FrictionParams, xi1, xi2,
                       flow: Callable | None = None):
    """Dispatch one step of a named scheme on arrays; returns ``(x, p)``."""
    if scheme == "obabco":
        return obabco_arrays(x, p, oracle, h, fp, xi1, xi2)
    if scheme == "obabo":
        return obabo_arrays(x, p, oracle, h, fp, xi1, xi2)[:2]
    if scheme == "oho":
        return oho_arrays(x, p, flow or hamiltonian_flow_for(oracle), h, fp, xi1, xi2)
    raise ConfigurationError(f"unknown scheme {scheme!r}; expected one of {sorted(SCHEMES)}")


# ---------------------------------------------------------------------------
# shooting
# ---------------------------------------------------------------------------

def shooting_momentum(x_start, x_target, oracle, h: float, tol: float = 1e-10, max_iter: int = 50,
                      flow: Callable | None = None) -> np.ndarray:
    """Momentum p such that the time-h flow from (x_start, p) lands on x_target.

    Newton iteration started from the straight-line guess with the
    approximate Jacobian h I, valid while h sqrt(beta) is small.

    Raises:
        ConfigurationError: if h sqrt(beta) >= 0.1.
        ShootingError: if the residual is not below ``tol`` within ``max_iter``.
    """
    h = check_scalar(h, "h", min_val=0, strict_min=True)
    if h * math.sqrt(oracle.meta.beta) >= 0.1:
        raise ConfigurationError(f"shooting requires h sqrt(beta) < 0.1, got {h * math.sqrt(oracle.meta.beta):.3g}")
    flow = flow or hamiltonian_flow_for(oracle)
    x_start = np.asarray(x_start, dtype=np.float64)
    x_target = np.asarray(x_target, dtype=np.float64)
    p = (x_target - x_start) / h
    for _ in range(max_iter):
        residual = flow(x_start, p, h)[0] - x_target
        if np.max(np.abs(residual)) <= tol:
            return p
        p = p - residual / h
    raise ShootingError(f"shooting did not converge to tol={tol} in {max_iter} iterations")
