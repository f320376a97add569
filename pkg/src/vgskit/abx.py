"""Phonetic discriminability: DTW frame distances and ABX aggregation.

Frame distance is 1 - cosine; alignment is classic dynamic time warping
over the full lattice with steps {(1,0), (0,1), (1,1)}, and the returned
distance is the accumulated cost along the optimal path divided by the
path length (mean-along-path normalization).  A triple scores 0 when X
is closer to A than to B, 1 when farther, 0.5 on an exact tie; group
errors are averaged per group key and the overall error is the
unweighted mean over groups.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .exceptions import DimMismatchError, MissingFeatureError, ZeroNormFrameError
from .featstore import Triplet
from .validation import frames_array


def _cosine_cost(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise 1 - cosine between frames of two sequences."""
    if x.shape[1] != y.shape[1]:
        raise DimMismatchError(f"frame dims differ: {x.shape[1]} vs {y.shape[1]}")
    xn = np.linalg.norm(x, axis=1)
    yn = np.linalg.norm(y, axis=1)
    if (xn == 0).any() or (yn == 0).any():
        raise ZeroNormFrameError("zero-norm frame: cosine distance undefined")
    return 1.0 - (x / xn[:, None]) @ (y / yn[:, None]).T


def dtw_distance(x, y) -> float:
    """Mean cost along the optimal monotone alignment of two sequences.

    The optimal path minimizes accumulated cost; among equal-cost paths
    the shorter one wins, so the result is deterministic.  Symmetric in
    its arguments and invariant to positive rescaling of any frame.
    """
    xa = frames_array(x, "x")
    ya = frames_array(y, "y")
    cost = _cosine_cost(xa, ya)
    tx, ty = cost.shape
    acc = np.empty((tx, ty), dtype=np.float64)
    plen = np.empty((tx, ty), dtype=np.int64)
    acc[0, 0] = cost[0, 0]
    plen[0, 0] = 1
    for i in range(1, tx):
        acc[i, 0] = acc[i - 1, 0] + cost[i, 0]
        plen[i, 0] = i + 1
    for j in range(1, ty):
        acc[0, j] = acc[0, j - 1] + cost[0, j]
        plen[0, j] = j + 1
    for i in range(1, tx):
        for j in range(1, ty):
            best_a = acc[i - 1, j - 1]
            best_l = plen[i - 1, j - 1]
            for a, l in ((acc[i - 1, j], plen[i - 1, j]), (acc[i, j - 1], plen[i, j - 1])):
                if a < best_a or (a == best_a and l < best_l):
                    best_a, best_l = a, l
            acc[i, j] = best_a + cost[i, j]
            plen[i, j] = best_l + 1
    return float(acc[-1, -1] / plen[-1, -1])


@dataclass(frozen=True)
class AbxReport:
    """Per-group and overall discriminability error rates."""

    group_errors: dict[str, float]
    group_counts: dict[str, int]
    overall: float
    n_triples: int

    def __post_init__(self):
        for key, err in self.group_errors.items():
            if not 0.0 <= err <= 1.0:
                raise ValueError(f"group {key!r} error {err} outside [0, 1]")
        if not 0.0 <= self.overall <= 1.0:
            raise ValueError(f"overall error {self.overall} outside [0, 1]")


def abx_error(triplets: Iterable[Triplet], features: Mapping[str, object],
              weighted: bool = False, n_jobs: int = 1) -> AbxReport:
    """Evaluate ABX triples against a feature store.

    ``features`` maps ids to FrameSequences or raw (frames x dims)
    arrays.  DTW distances are memoized per unordered id pair, and with
    ``n_jobs > 1`` distinct pairs are evaluated in a thread pool; triples
    are independent so results do not depend on evaluation order.  The
    overall error is the unweighted mean over group keys, or the
    triple-count-weighted mean when ``weighted`` is set.
    """
    triplets = list(triplets)
    if not triplets:
        raise ValueError("need at least one triplet")

    arrays: dict[str, np.ndarray] = {}

    def resolve(fid: str) -> np.ndarray:
        if fid not in arrays:
            if fid not in features:
                raise MissingFeatureError(f"no features loaded for id {fid!r}")
            arrays[fid] = frames_array(features[fid], fid)
        return arrays[fid]

    pairs: set[tuple[str, str]] = set()
    for t in triplets:
        for fid in (t.a_id, t.b_id, t.x_id):
            resolve(fid)
        pairs.add(tuple(sorted((t.a_id, t.x_id))))
        pairs.add(tuple(sorted((t.b_id, t.x_id))))
    ordered_pairs = sorted(pairs)

    def pair_distance(pair: tuple[str, str]) -> float:
        return dtw_distance(arrays[pair[0]], arrays[pair[1]])

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            distances = dict(zip(ordered_pairs, pool.map(pair_distance, ordered_pairs)))
    else:
        distances = {pair: pair_distance(pair) for pair in ordered_pairs}

    group_scores: dict[str, list[float]] = {}
    for t in triplets:
        da = distances[tuple(sorted((t.a_id, t.x_id)))]
        db = distances[tuple(sorted((t.b_id, t.x_id)))]
        if da < db:
            score = 0.0
        elif da > db:
            score = 1.0
        else:
            score = 0.5
        group_scores.setdefault(t.group_key, []).append(score)

    group_errors = {k: float(np.mean(v)) for k, v in sorted(group_scores.items())}
    group_counts = {k: len(v) for k, v in sorted(group_scores.items())}
    if weighted:
        overall = sum(e * group_counts[k] for k, e in group_errors.items()) / len(triplets)
    else:
        overall = float(np.mean(list(group_errors.values())))
    return AbxReport(
        group_errors=group_errors,
        group_counts=group_counts,
        overall=overall,
        n_triples=len(triplets),
    )
