"""Input-validation helpers shared across modules."""

from __future__ import annotations

import numpy as np

from .exceptions import ShapeMismatchError


def as_float_matrix(x, name: str = "X") -> np.ndarray:
    """Coerce to a finite, non-empty 2-D float64 array."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeMismatchError(f"{name} must be non-empty, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains NaN or Inf")
    return a


def as_float_vector(x, name: str = "x") -> np.ndarray:
    """Coerce to a finite, non-empty 1-D float64 array."""
    a = np.asarray(x, dtype=np.float64).ravel()
    if a.size < 1:
        raise ShapeMismatchError(f"{name} must be non-empty")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains NaN or Inf")
    return a


def frames_array(frames, name: str = "frames") -> np.ndarray:
    """Accept a FrameSequence or a raw (frames x dims) array."""
    return as_float_matrix(getattr(frames, "matrix", frames), name=name)


def units_list(units) -> list[int]:
    """Accept a UnitSequence or any iterable of non-negative ints."""
    raw = getattr(units, "units", units)
    out = [int(u) for u in np.asarray(raw).ravel()]
    if not out:
        raise ValueError("unit sequence must be non-empty")
    if any(u < 0 for u in out):
        raise ValueError("unit ids must be non-negative")
    return out
