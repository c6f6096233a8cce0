"""Validation helpers."""
import numbers

import numpy as np
from sklearn.utils import check_scalar as _sk_check_scalar

from .exceptions import RejectedInputError


def check_scalar(value, name, target_type=numbers.Real, min_val=None, max_val=None,
                 include_boundaries="both"):
    """sklearn's check_scalar, raising RejectedInputError instead."""
    if isinstance(value, (bool, np.bool_)) and target_type is not bool:
        raise RejectedInputError(f"`{name}` must be a number, got a bool")
    try:
        _sk_check_scalar(
            value,
            name=name,
            target_type=target_type,
            min_val=min_val,
            max_val=max_val,
            include_boundaries=include_boundaries,
        )
    except (TypeError, ValueError) as error:
        raise RejectedInputError(str(error)) from error
    if isinstance(value, numbers.Real) and value != value:
        raise RejectedInputError(f"`{name}` must not be nan")
    return value


def check_array(array, name, expected_dim, dtype=float):
    """Return `array` as an ndarray of `expected_dim` dimensions."""
    try:
        array = np.asarray(array, dtype=dtype)
    except (TypeError, ValueError) as error:
        raise RejectedInputError(f"`{name}` is not numeric: {error}") from error
    if array.ndim != expected_dim:
        raise RejectedInputError(
            f"`{name}` must be {expected_dim}D array, but got {array.ndim}D array"
        )
    return array


def check_finite(array, name):
    """Reject NaN and infinite entries."""
    if not np.all(np.isfinite(array)):
        raise RejectedInputError(f"`{name}` contains non-finite values")
    return array
