"""Input validation helpers shared across modules."""

import numbers

import numpy as np

from .exceptions import ParameterError


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ParameterError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ParameterError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise ParameterError(f"{name} must be >= 0, got {value!r}")
    return float(value)


def check_dimension(n):
    if isinstance(n, bool) or not isinstance(n, numbers.Integral) or n < 1:
        raise ParameterError(f"complex dimension n must be an integer >= 1, got {n!r}")
    return int(n)


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ParameterError(f"{name} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ParameterError(f"{name} must be >= {minimum}, got {value!r}")
    return int(value)


def as_frozen_array(values, dtype=float):
    """Copy ``values`` into a read-only 1-D or 2-D float array."""
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr
