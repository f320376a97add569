"""Semantic evaluation: temporal pooling and rank correlation.

Utterance vectors come from coordinate-wise mean or max pooling over
frames; model similarity is the cosine of pooled vectors, and agreement
with human judgments is Spearman rank correlation (average ranks on
ties, Pearson on the rank vectors) reported on a x100 scale.
"""

from __future__ import annotations

from typing import Iterable, Mapping

import numpy as np

from .exceptions import (
    DegenerateInputError,
    EmptySequenceError,
    MissingFeatureError,
    ZeroVectorError,
)
from .featstore import Judgment
from .validation import as_float_vector

POOL_MODES = ("mean", "max")


def pool(frames, mode: str = "mean") -> np.ndarray:
    """Collapse a (frames x dims) sequence to one vector over time."""
    if mode not in POOL_MODES:
        raise ValueError(f"mode must be one of {POOL_MODES}, got {mode!r}")
    m = np.asarray(getattr(frames, "matrix", frames), dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise EmptySequenceError(f"need a non-empty 2-D frame matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("frames contain NaN or Inf")
    return m.mean(axis=0) if mode == "mean" else m.max(axis=0)


def model_similarity(a, b) -> float:
    """Cosine similarity of two pooled vectors, in [-1, 1]."""
    va = as_float_vector(a, "a")
    vb = as_float_vector(b, "b")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine similarity undefined for zero vectors")
    return float(np.clip((va @ vb) / (na * nb), -1.0, 1.0))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Spearman rank correlation with average-rank tie handling.

    Computed as the Pearson correlation of the two rank vectors.  The
    denominator uses sqrt(var_x * var_y) so identical inputs give
    exactly 1.0.
    """
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.size != y.size:
        raise DegenerateInputError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise DegenerateInputError("need at least two observations")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("inputs contain NaN or Inf")
    if (x == x[0]).all() or (y == y[0]).all():
        raise DegenerateInputError("rank correlation undefined for constant series")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    cov = (dx * dy).sum()
    denom = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    return float(cov / denom)


def semantic_score(judgments: Iterable[Judgment], features: Mapping[str, object],
                   mode: str = "mean") -> float:
    """100 x Spearman between model cosines and human similarity scores.

    Both members of every judged pair are pooled with ``mode``; ids
    missing from ``features`` raise MissingFeatureError.
    """
    judgments = list(judgments)
    if not judgments:
        raise ValueError("need at least one judgment")
    pooled: dict[str, np.ndarray] = {}

    def vector(fid: str) -> np.ndarray:
        if fid not in pooled:
            if fid not in features:
                raise MissingFeatureError(f"no features loaded for id {fid!r}")
            pooled[fid] = pool(features[fid], mode=mode)
        return pooled[fid]

    model = np.array([model_similarity(vector(j.id_1), vector(j.id_2)) for j in judgments])
    human = np.array([j.human_score for j in judgments])
    return 100.0 * spearman(model, human)
