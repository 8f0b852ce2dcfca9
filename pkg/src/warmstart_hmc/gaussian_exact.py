"""Exact law propagation of kinetic Langevin schemes on diagonal Gaussians.

On the target N(0, diag(1/a)) every scheme considered here is an affine
map with additive Gaussian noise acting independently on each mode
(x_i, p_i).  A Gaussian phase-space law therefore stays Gaussian and mode
separable; its divergence to the stationary law diag(1/a_i, 1) is the sum
of per-mode 2x2 divergences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_float_array, check_scalar
from .core import INFINITE_DIVERGENCE
from .exceptions import ConfigurationError, DomainError, ScheduleError, UnsupportedTargetError

EIG_FLOOR = 1e-14


# ---------------------------------------------------------------------------
# 2x2 helpers, vectorised over modes
# ---------------------------------------------------------------------------

def _det2(s):
    return s[..., 0, 0] * s[..., 1, 1] - s[..., 0, 1] * s[..., 1, 0]


def _solve2(s, v):
    det = _det2(s)
    x0 = (s[..., 1, 1] * v[..., 0] - s[..., 0, 1] * v[..., 1]) / det
    x1 = (s[..., 0, 0] * v[..., 1] - s[..., 1, 0] * v[..., 0]) / det
    return np.stack([x0, x1], axis=-1)


def _matvec(m, v):
    return np.einsum("...ij,...j->...i", m, v)


def _sandwich(m, s):
    return np.einsum("...ij,...jk,...lk->...il", m, s, m)


def _target_cov(spectrum):
    cov = np.zeros(spectrum.shape + (2, 2))
    cov[..., 0, 0] = 1.0 / spectrum
    cov[..., 1, 1] = 1.0
    return cov


def mode_renyi(q: float, mean1, cov1, mean2, cov2) -> np.ndarray:
    """Per-mode Renyi divergence of 2x2 Gaussians (``inf`` if undefined)."""
    diff = mean1 - mean2
    logdet1 = np.log(_det2(cov1))
    logdet2 = np.log(_det2(cov2))
    if q == 1:
        trace = (cov2[..., 1, 1] * cov1[..., 0, 0] - 2 * cov2[..., 0, 1] * cov1[..., 0, 1]
                 + cov2[..., 0, 0] * cov1[..., 1, 1]) / _det2(cov2)
        maha = np.sum(diff * _solve2(cov2, diff), axis=-1)
        return 0.5 * (trace - 2.0 + maha + logdet2 - logdet1)
    mix = q * cov2 + (1.0 - q) * cov1
    det_mix = _det2(mix)
    ok = (mix[..., 0, 0] > 0) & (det_mix > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        maha = np.sum(diff * _solve2(mix, diff), axis=-1)
        value = 0.5 * q * maha - (np.log(det_mix) - (1.0 - q) * logdet1 - q * logdet2) / (2.0 * (q - 1.0))
    return np.where(ok, value, np.inf)


# ---------------------------------------------------------------------------
# laws
# ---------------------------------------------------------------------------

@dataclass
class GaussianPhaseLaw:
    """Mode-separable Gaussian law on phase space.

    Attributes:
        spectrum: target curvatures a_i, shape (d,).
        mean: per-mode means, shape (d, 2) ordered (x_i, p_i).
        cov: per-mode covariances, shape (d, 2, 2).
        clamp_count: number of eigenvalue clamps applied so far.
    """

    spectrum: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    clamp_count: int = field(default=0)

    def __post_init__(self):
        self.spectrum = as_float_array(self.spectrum, "spectrum")
        if np.any(self.spectrum <= 0):
            raise DomainError("spectrum must be strictly positive")
        d = self.spectrum.size
        self.mean = np.array(np.broadcast_to(np.asarray(self.mean, dtype=np.float64), (d, 2)))
        self.cov = np.array(np.broadcast_to(np.asarray(self.cov, dtype=np.float64), (d, 2, 2)))
        self._clamp()

    @property
    def dim(self) -> int:
        return self.spectrum.size

    @classmethod
    def stationary(cls, spectrum) -> "GaussianPhaseLaw":
        spectrum = as_float_array(spectrum, "spectrum")
        return cls(spectrum, np.zeros((spectrum.size, 2)), _target_cov(spectrum))

    @classmethod
    def product(cls, spectrum, x_mean=0.0, x_var=None, p_mean=0.0, p_var=1.0) -> "GaussianPhaseLaw":
        """Independent positions and momenta with per-coordinate means and variances.

        ``x_var`` defaults to 1/max(spectrum), the N(0, I/beta) warm start.
        """
        spectrum = as_float_array(spectrum, "spectrum")
        d = spectrum.size
        if x_var is None:
            x_var = 1.0 / spectrum.max()
        mean = np.zeros((d, 2))
        mean[:, 0] = x_mean
        mean[:, 1] = p_mean
        cov = np.zeros((d, 2, 2))
        cov[:, 0, 0] = x_var
        cov[:, 1, 1] = p_var
        return cls(spectrum, mean, cov)

    def _clamp(self) -> None:
        self.cov = 0.5 * (self.cov + np.swapaxes(self.cov, -1, -2))
        tr = self.cov[:, 0, 0] + self.cov[:, 1, 1]
        disc = np.sqrt(np.maximum(0.25 * (self.cov[:, 0, 0] - self.cov[:, 1, 1]) ** 2 + self.cov[:, 0, 1] ** 2, 0.0))
        low = 0.5 * tr - disc
        bad = low < EIG_FLOOR
        if np.any(bad):
            w, v = np.linalg.eigh(self.cov[bad])
            w = np.maximum(w, EIG_FLOOR)
            self.cov[bad] = np.einsum("mij,mj,mkj->mik", v, w, v)
            self.clamp_count += int(bad.sum())

    def apply(self, M: np.ndarray, Q: np.ndarray) -> "GaussianPhaseLaw":
        """Push the law through v -> M v + N(0, Q) in place and return it."""
        self.mean = _matvec(M, self.mean)
        self.cov = _sandwich(M, self.cov) + Q
        self._clamp()
        return self

    def copy(self) -> "GaussianPhaseLaw":
        return GaussianPhaseLaw(self.spectrum.copy(), self.mean.copy(), self.cov.copy(), self.clamp_count)

    def divergence(self, q: float = 2.0, other: "GaussianPhaseLaw | None" = None) -> float:
        """R_q(self || other), default ``other`` the stationary target law."""
        if other is None:
            m2, c2 = np.zeros_like(self.mean), _target_cov(self.spectrum)
        else:
            m2, c2 = other.mean, other.cov
        modes = mode_renyi(float(q), self.mean, self.cov, m2, c2)
        if np.any(np.isinf(modes)):
            return INFINITE_DIVERGENCE
        return float(max(np.sum(modes), 0.0))

    def marginal_x(self) -> tuple[np.ndarray, np.ndarray]:
        return self.mean[:, 0].copy(), self.cov[:, 0, 0].copy()

    def sample(self, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``n`` phase points; returns arrays of shape (n, d)."""
        chol = np.linalg.cholesky(self.cov)
        z = rng.standard_normal((n, self.dim, 2))
        v = self.mean + np.einsum("mij,nmj->nmi", chol, z)
        return v[..., 0], v[..., 1]


# ---------------------------------------------------------------------------
# scheme matrices
# ---------------------------------------------------------------------------

def _factor(values, rows):
    out = np.zeros(np.shape(values) + (2, 2))
    for (i, j), val in rows.items():
        out[..., i, j] = val
    return out


def affine_of_scheme(scheme: str, a, h: float, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-mode one-step map (M, Q) of a scheme for curvature(s) ``a``.

    The law update is mean -> M mean and cov -> M cov M^T + Q.  The maps are
    composed from the O, B and A factor matrices (and the closed-form
    rotation for OHO).
    """
    a = np.asarray(a, dtype=np.float64)
    h = check_scalar(h, "h", min_val=0, strict_min=True)
    gamma = check_scalar(gamma, "gamma", min_val=0)
    ones = np.ones_like(a)
    decay = math.exp(-0.5 * gamma * h)
    noise_var = -math.expm1(-gamma * h)
    O = _factor(a, {(0, 0): ones, (1, 1): decay * ones})
    QO = _factor(a, {(1, 1): noise_var * ones})
    B = _factor(a, {(0, 0): ones, (1, 0): -0.5 * h * a, (1, 1): ones})
    A = _factor(a, {(0, 0): ones, (0, 1): h * ones, (1, 1): ones})
    if scheme == "obabo":
        H = B @ A @ B
    elif scheme == "obabco":
        BAB = B @ A @ B
        p_ob = B[..., 1, :]
        p_obab = BAB[..., 1, :]
        e1 = np.stack([ones, np.zeros_like(a)], axis=-1)
        x_c = e1 * (1.0 + h * h * a / 6.0)[..., None] + (h / 3.0) * (p_obab + 2.0 * p_ob)
        H = np.stack([x_c, p_obab], axis=-2)
    elif scheme == "oho":
        w = np.sqrt(a)
        H = _factor(a, {(0, 0): np.cos(w * h), (0, 1): np.sin(w * h) / w,
                        (1, 0): -w * np.sin(w * h), (1, 1): np.cos(w * h)})
    else:
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    OH = O @ H
    M = OH @ O
    Q = _sandwich(OH, QO) + QO
    return M, Q


def _scheme_maps(law_or_spectrum, scheme, h, gamma):
    spectrum = getattr(law_or_spectrum, "spectrum", law_or_spectrum)
    return affine_of_scheme(scheme, spectrum, h, gamma)


def require_diagonal_gaussian(oracle) -> np.ndarray:
    """Spectrum of a diagonal Gaussian oracle, else UnsupportedTargetError."""
    spectrum = getattr(oracle, "spectrum", None)
    if spectrum is None:
        raise UnsupportedTargetError("exact law propagation needs a diagonal Gaussian target")
    return np.asarray(spectrum)


def propagate_curves(law: GaussianPhaseLaw, scheme: str, h: float, gamma: float, n_steps: int,
                     orders=(2.0,), kl: bool = False) -> dict:
    """Divergences to the target after 0..n_steps steps.

    Returns a dict mapping each order (and ``"kl"`` if requested) to an
    array of length ``n_steps + 1``.  ``law`` is not modified.
    """
    n_steps = check_scalar(n_steps, "n_steps", min_val=0, integer=True)
    M, Q = _scheme_maps(law, scheme, h, gamma)
    work = law.copy()
    keys = [float(q) for q in orders] + (["kl"] if kl else [])
    out = {k: np.empty(n_steps + 1) for k in keys}
    for n in range(n_steps + 1):
        if n:
            work.apply(M, Q)
        for q in orders:
            out[float(q)][n] = work.divergence(q)
        if kl:
            out["kl"][n] = work.divergence(1.0)
    out["clamp_count"] = work.clamp_count
    return out


def propagate(law: GaussianPhaseLaw, scheme: str, h: float, gamma: float, n_steps: int,
              q: float = 2.0) -> np.ndarray:
    """R_q to the target after 0, 1, ..., n_steps steps of ``scheme``."""
    return propagate_curves(law, scheme, h, gamma, n_steps, orders=(q,))[float(q)]


def stationary_law(scheme: str, spectrum, h: float, gamma: float) -> GaussianPhaseLaw:
    """Fixed point of the scheme's law map (the biased stationary law).

    Raises:
        ScheduleError: if the scheme is unstable on some mode.
    """
    spectrum = as_float_array(spectrum, "spectrum")
    M, Q = affine_of_scheme(scheme, spectrum, h, gamma)
    radius = np.max(np.abs(np.linalg.eigvals(M)))
    if radius >= 1:
        raise ScheduleError(f"{scheme} is unstable at h={h}, gamma={gamma} (spectral radius {radius:.4g})")
    kron = np.einsum("mij,mkl->mikjl", M, M).reshape(-1, 4, 4)
    vec = np.linalg.solve(np.eye(4) - kron, Q.reshape(-1, 4, 1))
    return GaussianPhaseLaw(spectrum, np.zeros((spectrum.size, 2)), vec.reshape(-1, 2, 2))


def bias_floor(scheme: str, spectrum, h: float, gamma: float, q: float = 2.0) -> float:
    """R_q between the scheme's stationary law and the target."""
    return stationary_law(scheme, spectrum, h, gamma).divergence(q)


def warmstart_iterations(spectrum, h: float, gamma: float, scheme: str = "obabco", q: float = 2.0,
                         threshold: float = 1.0, init: GaussianPhaseLaw | None = None,
                         cap: int = 10_000_000) -> int:
    """Smallest N with R_q(law after N steps || target) <= threshold.

    The default initial law is N(0, I/beta) x N(0, I).

    Raises:
        ScheduleError: if the stationary bias already exceeds the threshold
            or N would exceed ``cap``.
    """
    law = (init if init is not None else GaussianPhaseLaw.product(spectrum)).copy()
    if bias_floor(scheme, law.spectrum, h, gamma, q) > threshold:
        raise ScheduleError(f"stationary bias of {scheme} at h={h} exceeds threshold {threshold}")
    M, Q = affine_of_scheme(scheme, law.spectrum, h, gamma)
    for n in range(cap + 1):
        if law.divergence(q) <= threshold:
            return n
        law.apply(M, Q)
    raise ScheduleError(f"threshold {threshold} not reached within {cap} steps")
