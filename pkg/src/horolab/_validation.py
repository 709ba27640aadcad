"""Small input checks in the spirit of sklearn.utils.validation."""

import numbers

import numpy as np

from .errors import DomainError, PreconditionError


def check_scalar(x, name, *, min_val=None, max_val=None, include_min=True, include_max=True,
                 error=DomainError):
    if isinstance(x, (bool, np.bool_)) or not isinstance(x, (numbers.Real, np.floating, np.integer)):
        raise error(f"{name} must be a real number, got {type(x).__name__}")
    x = float(x)
    if not np.isfinite(x):
        raise error(f"{name} must be finite, got {x}")
    if min_val is not None:
        if x < min_val or (x == min_val and not include_min):
            raise error(f"{name}={x} below allowed minimum {min_val}")
    if max_val is not None:
        if x > max_val or (x == max_val and not include_max):
            raise error(f"{name}={x} above allowed maximum {max_val}")
    return x


def check_count(n, name, minimum=1):
    if isinstance(n, (bool, np.bool_)) or not isinstance(n, (numbers.Integral, np.integer)):
        raise PreconditionError(f"{name} must be an integer")
    if n < minimum:
        raise PreconditionError(f"{name} must be >= {minimum}, got {n}")
    return int(n)


def as_angles(theta, name="theta"):
    """Float array of boundary angles wrapped to (-pi, pi]."""
    a = np.asarray(getattr(theta, "theta", theta), dtype=float)
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains non-finite values")
    return wrap_angle(a)


def wrap_angle(a):
    a = np.asarray(a, dtype=float)
    w = np.remainder(a + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)
