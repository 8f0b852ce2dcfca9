"""Small input-validation helpers in the spirit of ``sklearn.utils.validation``."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import ConfigurationError


def as_float_array(x, name: str = "array", ndim_min: int = 1) -> np.ndarray:
    """Return ``x`` as a float64 array, checking it is finite."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim < ndim_min:
        raise ConfigurationError(f"{name} must have at least {ndim_min} dimension(s), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} contains non-finite values")
    return arr


def check_scalar(value, name: str, *, min_val=None, max_val=None, strict_min: bool = False,
                 integer: bool = False) -> float | int:
    """Validate a scalar parameter and return it as float (or int)."""
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigurationError(f"{name} must be a real number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ConfigurationError(f"{name} must be an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
    if not np.isfinite(value):
        raise ConfigurationError(f"{name} must be finite, got {value!r}")
    if min_val is not None:
        if (strict_min and value <= min_val) or (not strict_min and value < min_val):
            op = ">" if strict_min else ">="
            raise ConfigurationError(f"{name} must be {op} {min_val}, got {value!r}")
    if max_val is not None and value > max_val:
        raise ConfigurationError(f"{name} must be <= {max_val}, got {value!r}")
    return value


def as_generator(rng) -> np.random.Generator:
    """Coerce ``None``, an int seed, an ``RngStream`` or a Generator to a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if hasattr(rng, "generator"):
        return rng.generator()
    if rng is None or isinstance(rng, numbers.Integral):
        return np.random.default_rng(rng)
    raise ConfigurationError(f"cannot build a random generator from {rng!r}")
