"""Input validation helpers shared across the package."""

import numpy as np

from .errors import DegenerateInput, LengthMismatch, LengthNotDivisible


def check_pm1(a, name="a"):
    """Return `a` as an int8 array after checking every entry is -1 or +1."""
    arr = np.asarray(a)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isin(arr, (-1, 1))):
        raise ValueError(f"{name} must contain only -1 and +1 values")
    return arr.astype(np.int8)


def check_ternary(b, name="b"):
    """Return `b` as an int8 array after checking entries are in {-1, 0, +1}.

    Values outside the alphabet are rejected, never clamped.
    """
    arr = np.asarray(b)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isin(arr, (-1, 0, 1))):
        raise ValueError(f"{name} must contain only -1, 0 and +1 values")
    return arr.astype(np.int8)


def check_not_all_zero(b, name="b"):
    if not np.any(b):
        raise DegenerateInput(f"{name} contains no detections (all zeros)")


def check_same_length(a, b, names=("a", "b")):
    if len(a) != len(b):
        raise LengthMismatch(
            f"{names[0]} has length {len(a)} but {names[1]} has length {len(b)}"
        )


def check_divisible(length, n1):
    if n1 < 1:
        raise LengthNotDivisible(f"block count must be >= 1, got {n1}")
    if length % n1 != 0:
        raise LengthNotDivisible(f"length {length} is not divisible by N1={n1}")


def check_timestamps(t, name="timestamps"):
    """Return `t` as a float64 array after checking it is sorted and finite."""
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if arr.size > 1 and np.any(np.diff(arr) < 0):
        raise ValueError(f"{name} must be sorted in non-decreasing order")
    return arr
