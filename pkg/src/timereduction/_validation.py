"""Argument checks shared by the estimator and the pipeline."""

from __future__ import annotations

import numbers

import numpy as np

from .forward import BoundaryData


def check_boundary_data(X) -> BoundaryData:
    if not isinstance(X, BoundaryData):
        raise TypeError(f"expected BoundaryData, got {type(X).__name__}")
    if not (np.isfinite(X.p).all() and np.isfinite(X.q).all()):
        raise ValueError("boundary data contain non-finite values")
    if abs(X.times[0]) > 1e-12:
        raise ValueError("boundary data must start at t = 0")
    return X


def check_positive(name: str, value, allow_none: bool = False):
    if value is None and allow_none:
        return value
    if not isinstance(value, numbers.Real) or isinstance(value, bool) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value


def check_int_range(name: str, value, lo: int, hi: int | None = None) -> int:
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < lo or (hi is not None and value > hi):
        bound = f"[{lo}, {hi}]" if hi is not None else f">= {lo}"
        raise ValueError(f"{name} must be {bound}, got {value}")
    return int(value)


def check_choice(name: str, value, choices) -> str:
    if value not in choices:
        raise ValueError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value


def check_point(name: str, value) -> tuple[float, float]:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (2,) or not np.isfinite(arr).all():
        raise ValueError(f"{name} must be a pair of finite numbers, got {value!r}")
    return float(arr[0]), float(arr[1])
