"""Input checking helpers shared by the estimators and free functions."""

from __future__ import annotations

import numbers
from fractions import Fraction

import numpy as np

from .exceptions import ValidationError

STOCHASTIC_TOL = 1e-12


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``.

    ``None`` gives a fresh unseeded generator, an int seeds a new PCG64
    generator and an existing ``Generator`` is passed through untouched.
    """
    if seed is None or isinstance(seed, (numbers.Integral, np.integer)):
        return np.random.default_rng(seed)
    if isinstance(seed, np.random.Generator):
        return seed
    raise ValueError(f"{seed!r} cannot be used to seed a numpy Generator")


def parse_number(value) -> float:
    """Accept floats, ints and fraction strings such as ``"9/10"``."""
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"cannot parse number {value!r}") from exc
    if isinstance(value, (numbers.Real, np.floating, np.integer)):
        return float(value)
    raise ValidationError(f"cannot parse number {value!r}")


def as_matrix(values, d: int, name: str) -> np.ndarray:
    """Build a d x d float matrix from nested rows or a flat row-major list."""
    flat = np.array(_flatten(values), dtype=object)
    if flat.size != d * d:
        raise ValidationError(f"{name}: expected {d * d} entries, got {flat.size}")
    return np.array([parse_number(v) for v in flat], dtype=float).reshape(d, d)


def as_vector(values, d: int, name: str) -> np.ndarray:
    flat = _flatten(values)
    if len(flat) != d:
        raise ValidationError(f"{name}: expected {d} entries, got {len(flat)}")
    return np.array([parse_number(v) for v in flat], dtype=float)


def _flatten(values):
    if isinstance(values, (list, tuple, np.ndarray)):
        out = []
        for v in values:
            out.extend(_flatten(v))
        return out
    return [values]


def check_stochastic(p: np.ndarray, name: str, tol: float = STOCHASTIC_TOL) -> None:
    """Raise ``ValidationError`` naming the first bad row of ``p``."""
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValidationError(f"{name}: expected a square matrix, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValidationError(f"{name}: non-finite entries")
    for i, row in enumerate(p):
        if np.any(row < 0.0) or np.any(row > 1.0):
            raise ValidationError(f"{name}: row {i + 1} has entries outside [0, 1]")
        total = row.sum()
        if abs(total - 1.0) > tol:
            raise ValidationError(f"{name}: row {i + 1} sums to {total!r}, not 1")


def check_state(state, d: int) -> int:
    """Convert a 1-based external state label to a 0-based index."""
    if not isinstance(state, (numbers.Integral, np.integer)) or not 1 <= state <= d:
        raise ValidationError(f"state label {state!r} outside 1..{d}")
    return int(state) - 1
