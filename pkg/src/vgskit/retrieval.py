"""Coarse scoring, top-K selection, coarse-to-fine retrieval and recall.

The two-pass strategy: cheap dot-product scores pick ``coarse_k``
candidates per query, an expensive fine scorer re-ranks only those, and
the top ``n`` by fine score are returned.  With ``coarse_k`` equal to
the full target count the result is identical to exhaustive fine
ranking; with a small pool the fine scorer runs ``queries * coarse_k``
times instead of ``queries * targets``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DimMismatchError,
    KcSmallerThanNError,
    UnknownQueryError,
)
from .featstore import PairManifest
from .validation import as_float_matrix, as_float_vector

DIRECTIONS = ("speech_to_image", "image_to_speech")


def coarse_scores(queries, targets) -> np.ndarray:
    """Dense dot-product similarity: ``S[i, j] = query_i . target_j``."""
    q = as_float_matrix(queries, "queries")
    t = as_float_matrix(targets, "targets")
    if q.shape[1] != t.shape[1]:
        raise DimMismatchError(f"query dim {q.shape[1]} != target dim {t.shape[1]}")
    return q @ t.T


def top_k(scores, k: int) -> np.ndarray:
    """Indices of the k largest scores, descending, ties to the lower index."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    s = as_float_vector(scores, "scores")
    order = np.argsort(-s, kind="stable")  # stable keeps lower index first on ties
    return order[: min(k, s.size)]


@dataclass(frozen=True)
class RankedList:
    """Candidates for one query, best first."""

    query_id: int
    candidate_ids: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        cand = np.asarray(self.candidate_ids, dtype=np.int64)
        sc = np.asarray(self.scores, dtype=np.float64)
        if cand.shape != sc.shape or cand.ndim != 1:
            raise ValueError("candidate_ids and scores must be matching 1-D arrays")
        if len(np.unique(cand)) != cand.size:
            raise ValueError("duplicate candidates in ranked list")
        if cand.size > 1 and (np.diff(sc) > 0).any():
            raise ValueError("scores must be non-increasing")
        object.__setattr__(self, "candidate_ids", cand)
        object.__setattr__(self, "scores", sc)


class TableFineScorer:
    """Fine scorer backed by a precomputed (queries x targets) table.

    Implements the fine-scorer contract: deterministic per pair, with an
    observable call counter.  Counter updates are atomic so concurrent
    fan-out over queries stays accurate.
    """

    def __init__(self, table):
        self.table = as_float_matrix(table, "table")
        self.call_count = 0
        self._lock = threading.Lock()

    def __call__(self, query_id: int, candidate_id: int) -> float:
        with self._lock:
            self.call_count += 1
        return float(self.table[query_id, candidate_id])


class DotProductFineScorer:
    """Fine scorer that recomputes the coarse dot product per pair."""

    def __init__(self, queries, targets):
        self.queries = as_float_matrix(queries, "queries")
        self.targets = as_float_matrix(targets, "targets")
        self.call_count = 0
        self._lock = threading.Lock()

    def __call__(self, query_id: int, candidate_id: int) -> float:
        with self._lock:
            self.call_count += 1
        return float(self.queries[query_id] @ self.targets[candidate_id])


def ctf_retrieve(queries, targets, fine_scorer, coarse_k: int, n: int) -> list[RankedList]:
    """Two-pass retrieval: coarse top-``coarse_k``, fine re-rank, top ``n``.

    The fine scorer is invoked on exactly ``coarse_k`` candidates per
    query, never more.  Fine-score ties break toward the lower candidate
    index.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if coarse_k < n:
        raise KcSmallerThanNError(f"coarse_k ({coarse_k}) must be >= n ({n})")
    scores = coarse_scores(queries, targets)
    results = []
    for qi in range(scores.shape[0]):
        cand = top_k(scores[qi], coarse_k)
        fine = np.array([fine_scorer(qi, int(c)) for c in cand], dtype=np.float64)
        order = np.lexsort((cand, -fine))[:n]
        results.append(RankedList(query_id=qi, candidate_ids=cand[order], scores=fine[order]))
    return results


def recall_at_n(ranked: list[RankedList], manifest: PairManifest, n: int,
                direction: str = "speech_to_image") -> float:
    """Fraction of queries with at least one true match in their top n.

    speech_to_image: query ids are caption row indices (manifest record
    order) and candidates are image column indices (first-appearance
    order); the single positive is the caption's own image.
    image_to_speech: query ids are image column indices, candidates are
    caption row indices, and any of the image's captions counts as a
    hit.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not ranked:
        raise ValueError("need at least one ranked list")
    if direction == "speech_to_image":
        positives = [
            {manifest.image_index(r.image_id)} for r in manifest.records
        ]
    else:
        positives = [
            set(manifest.captions_of(image_id)) for image_id in manifest.image_ids
        ]
    hits = 0
    for rl in ranked:
        if not 0 <= rl.query_id < len(positives):
            raise UnknownQueryError(f"query {rl.query_id} not present in the manifest")
        wanted = positives[rl.query_id]
        if any(int(c) in wanted for c in rl.candidate_ids[:n]):
            hits += 1
    return hits / len(ranked)
