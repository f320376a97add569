"""Vector quantization: product-codebook assignment and k-means units.

The product codebook turns per-timestep logits into hard or
Gumbel-perturbed entry selections plus the noise-free softmax
probabilities consumed by the diversity loss.  ``KMeansQuantizer`` is a
deterministic Lloyd's k-means (k-means++ seeding) used to discover the
discrete units scored by the language-model pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import softmax
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .exceptions import (
    DimMismatchError,
    InvalidDistributionError,
    NonPositiveTemperatureError,
    ShapeMismatchError,
    TooFewPointsError,
)
from .featstore import UnitSequence, read_features, write_features
from .validation import as_float_matrix, frames_array

ASSIGN_MODES = ("hard", "gumbel")


@dataclass(frozen=True)
class Codebook:
    """Product codebook: ``codewords[g, v]`` is entry v of group g."""

    codewords: np.ndarray  # (groups, entries, dim)

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=np.float64)
        if cw.ndim != 3:
            raise ShapeMismatchError(f"codewords must be 3-D (G, V, d), got shape {cw.shape}")
        g, v, d = cw.shape
        if g < 1 or v < 2 or d < 1:
            raise ValueError(f"need G >= 1, V >= 2, d >= 1, got {cw.shape}")
        if not np.isfinite(cw).all():
            raise ValueError("codewords contain NaN or Inf")
        object.__setattr__(self, "codewords", cw)

    @property
    def n_groups(self) -> int:
        return self.codewords.shape[0]

    @property
    def n_entries(self) -> int:
        return self.codewords.shape[1]

    @property
    def dim(self) -> int:
        return self.codewords.shape[2]


class AssignResult(NamedTuple):
    indices: np.ndarray  # (T, G) selected entry per group
    probs: np.ndarray    # (T, G, V) noise-free softmax of the logits
    codes: np.ndarray    # (T, G*dim) concatenated selected codewords


def codebook_assign(codebook: Codebook, logits, mode: str = "hard",
                    temperature: float = 1.0, seed: int = 0) -> AssignResult:
    """Select one entry per group and timestep from assignment logits.

    hard mode takes the per-group argmax; gumbel mode perturbs the
    logits with Gumbel(0, 1) noise drawn from ``seed`` before the
    argmax, so identical seeds give identical selections.  In both modes
    ``probs`` is the plain softmax of the unperturbed logits (the
    quantity averaged by :func:`batch_code_distribution`), and ``codes``
    concatenates the selected codewords across groups per timestep.
    """
    if mode not in ASSIGN_MODES:
        raise ValueError(f"mode must be one of {ASSIGN_MODES}, got {mode!r}")
    lg = np.asarray(logits, dtype=np.float64)
    if lg.ndim != 3:
        raise ShapeMismatchError(f"logits must be 3-D (T, G, V), got shape {lg.shape}")
    t, g, v = lg.shape
    if (g, v) != (codebook.n_groups, codebook.n_entries):
        raise ShapeMismatchError(
            f"logits groups/entries {(g, v)} != codebook {(codebook.n_groups, codebook.n_entries)}"
        )
    if not np.isfinite(lg).all():
        raise ValueError("logits contain NaN or Inf")
    if mode == "gumbel" and not (np.isfinite(temperature) and temperature > 0):
        raise NonPositiveTemperatureError(f"temperature must be > 0, got {temperature}")

    probs = softmax(lg, axis=-1)
    if mode == "hard":
        indices = lg.argmax(axis=-1)
    else:
        noise = np.random.default_rng(seed).gumbel(size=lg.shape)
        indices = (lg + noise).argmax(axis=-1)
    codes = codebook.codewords[np.arange(g)[None, :], indices]  # (T, G, dim)
    return AssignResult(indices=indices, probs=probs, codes=codes.reshape(t, -1))


def batch_code_distribution(probs, tol: float = 1e-6, hard_counts: bool = False) -> np.ndarray:
    """Mean assignment distribution per group over a batch of timesteps.

    Rows of the result sum to 1 and feed the diversity loss.  With
    ``hard_counts`` the mean is taken over one-hot argmax selections
    instead of the soft probabilities.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 3:
        raise ShapeMismatchError(f"probs must be 3-D (T, G, V), got shape {p.shape}")
    if not np.isfinite(p).all():
        raise ValueError("probs contain NaN or Inf")
    if (p < 0).any():
        raise InvalidDistributionError("probabilities must be non-negative")
    sums = p.sum(axis=-1)
    if np.abs(sums - 1.0).max() > tol:
        t, g = np.unravel_index(np.abs(sums - 1.0).argmax(), sums.shape)
        raise InvalidDistributionError(
            f"probs[{t}, {g}] sums to {sums[t, g]!r}, expected 1"
        )
    if hard_counts:
        v = p.shape[-1]
        p = np.eye(v)[p.argmax(axis=-1)]
    return p.mean(axis=0)


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: squared-distance-weighted sampling of centers."""
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    centroids[0] = x[int(rng.integers(n))]
    closest = cdist(x, centroids[:1], "sqeuclidean").ravel()
    for c in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))  # all remaining points coincide with a center
        centroids[c] = x[idx]
        closest = np.minimum(closest, cdist(x, centroids[c : c + 1], "sqeuclidean").ravel())
    return centroids


class KMeansQuantizer(BaseEstimator):
    """Deterministic Lloyd's k-means for discrete unit discovery.

    k-means++ initialization from ``seed``, iteration until the
    assignment reaches a fixpoint or ``max_iter``.  Empty clusters are
    re-seeded to the point currently farthest from its assigned
    centroid.  Ties in assignment always break toward the lowest
    centroid index, so fits and predictions are reproducible across
    platforms.

    Attributes after fit: ``centroids_`` (k x dim), ``labels_``,
    ``inertia_`` (final sum of squared distances), ``inertia_history_``
    (per-iteration, non-increasing) and ``n_iter_``.
    """

    def __init__(self, n_clusters: int = 500, max_iter: int = 100, seed: int = 0):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.seed = seed

    def fit(self, X, y=None):
        x = as_float_matrix(X, "X")
        k = int(self.n_clusters)
        if k < 1:
            raise ValueError(f"n_clusters must be >= 1, got {k}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        n = x.shape[0]
        if n < k:
            raise TooFewPointsError(f"{n} points cannot support {k} clusters")
        rng = np.random.default_rng(self.seed)
        centroids = _kmeans_pp_init(x, k, rng)
        history: list[float] = []
        labels_prev = None
        labels = None
        for _ in range(int(self.max_iter)):
            dists = cdist(x, centroids, "sqeuclidean")
            labels = dists.argmin(axis=1)
            point_cost = dists[np.arange(n), labels]
            # re-seed empty clusters at the globally worst-served point
            counts = np.bincount(labels, minlength=k)
            for c in np.flatnonzero(counts == 0):
                far = int(point_cost.argmax())
                labels[far] = c
                centroids[c] = x[far]
                point_cost[far] = 0.0
            history.append(float(point_cost.sum()))
            if labels_prev is not None and np.array_equal(labels, labels_prev):
                break
            labels_prev = labels
            for c in range(k):
                centroids[c] = x[labels == c].mean(axis=0)
        self.centroids_ = centroids
        self.labels_ = labels
        self.inertia_history_ = np.asarray(history)
        self.inertia_ = history[-1]
        self.n_iter_ = len(history)
        return self

    def _check_input(self, X) -> np.ndarray:
        if not hasattr(self, "centroids_"):
            raise NotFittedError("KMeansQuantizer must be fitted before use")
        x = as_float_matrix(X, "X")
        if x.shape[1] != self.centroids_.shape[1]:
            raise DimMismatchError(
                f"frame dim {x.shape[1]} != centroid dim {self.centroids_.shape[1]}"
            )
        return x

    def predict(self, X) -> np.ndarray:
        """Nearest centroid per row (squared Euclidean, lowest index on ties)."""
        x = self._check_input(X)
        return cdist(x, self.centroids_, "sqeuclidean").argmin(axis=1)

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).labels_

    def transform(self, X) -> np.ndarray:
        """Euclidean distance of each row to every centroid."""
        x = self._check_input(X)
        return cdist(x, self.centroids_, "euclidean")


def kmeans_fit(data, n_clusters: int, max_iter: int = 100, seed: int = 0) -> KMeansQuantizer:
    """Fit a :class:`KMeansQuantizer` on a (points x dim) matrix."""
    return KMeansQuantizer(n_clusters=n_clusters, max_iter=max_iter, seed=seed).fit(data)


def kmeans_quantize(model: KMeansQuantizer, frames) -> UnitSequence:
    """Map every frame of an utterance to its nearest centroid id."""
    matrix = frames_array(frames)
    units = model.predict(matrix)
    return UnitSequence(units=units, utterance_id=getattr(frames, "utterance_id", ""))


def save_kmeans(model: KMeansQuantizer, path) -> None:
    """Persist centroids as an FVF1 matrix plus a one-line JSON sidecar.

    Centroids are stored as float32 (the container payload type); the
    ``<path>.meta.json`` sidecar records k, dim, seed and iteration
    count.
    """
    if not hasattr(model, "centroids_"):
        raise NotFittedError("cannot save an unfitted KMeansQuantizer")
    write_features(model.centroids_, path)
    meta = {
        "k": int(model.centroids_.shape[0]),
        "dim": int(model.centroids_.shape[1]),
        "seed": int(model.seed),
        "iters": int(model.n_iter_),
    }
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def load_kmeans(path) -> KMeansQuantizer:
    centroids = read_features(path)
    if centroids.ndim != 2:
        raise ShapeMismatchError("k-means model file must hold a rank-2 matrix")
    meta_path = Path(str(path) + ".meta.json")
    seed = 0
    max_iter = 100
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        seed = int(meta.get("seed", 0))
        max_iter = max(1, int(meta.get("iters", max_iter)))
    model = KMeansQuantizer(n_clusters=centroids.shape[0], max_iter=max_iter, seed=seed)
    model.centroids_ = centroids.astype(np.float64)
    model.n_iter_ = max_iter
    return model
