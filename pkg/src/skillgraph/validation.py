"""Input validation helpers.

Small check_* utilities in the spirit of sklearn's validation module: every
public entry point funnels raw user input through these before touching the
numerics, so error messages name the offending field instead of surfacing a
numpy broadcast failure three layers down.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionMismatch, SchemaError


def as_float_array(value, name: str, shape: tuple | None = None) -> np.ndarray:
    """Convert to a C-contiguous float64 array and verify finiteness."""
    try:
        arr = np.ascontiguousarray(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{name}: not numeric ({exc})") from exc
    if not np.all(np.isfinite(arr)):
        raise SchemaError(f"{name}: contains NaN or Inf")
    if shape is not None and arr.shape != shape:
        raise SchemaError(f"{name}: expected shape {shape}, got {arr.shape}")
    return arr


def as_bool_array(value, name: str, length: int | None = None) -> np.ndarray:
    arr = np.asarray(value)
    if arr.dtype != np.bool_:
        if not np.all((arr == 0) | (arr == 1)):
            raise SchemaError(f"{name}: contact flags must be 0/1 or booleans")
        arr = arr.astype(bool)
    arr = np.ascontiguousarray(arr)
    if length is not None and arr.shape != (length,):
        raise SchemaError(f"{name}: expected {length} flags, got shape {arr.shape}")
    return arr


def check_same_length(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"{what}: shapes {a.shape} and {b.shape} differ")


def check_positive(value: float, name: str) -> float:
    if not value > 0:
        raise ConfigError(f"{name} must be > 0, got {value}")
    return float(value)


def check_nonnegative(value: float, name: str) -> float:
    if value < 0:
        raise ConfigError(f"{name} must be >= 0, got {value}")
    return float(value)


def check_in_range(value: float, name: str, low: float, high: float,
                   low_open: bool = False, high_open: bool = False) -> float:
    value = float(value)
    ok_low = value > low if low_open else value >= low
    ok_high = value < high if high_open else value <= high
    if not (ok_low and ok_high):
        lo = "(" if low_open else "["
        hi = ")" if high_open else "]"
        raise ConfigError(f"{name} must lie in {lo}{low}, {high}{hi}, got {value}")
    return value
