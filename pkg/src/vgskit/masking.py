"""Span mask sampling for masked-prediction training.

Span starts are drawn by an independent Bernoulli per timestep and each
start marks a fixed-length run of frames; overlapping runs merge and
runs are truncated at the utterance boundary.  Two batch behaviors are
provided: fully independent sampling, and a "crop to the batch minimum"
mode that subsamples every utterance's span starts down to the smallest
count in the batch, which masks proportionally more of short utterances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import EmptyBatchError

MASK_MODES = ("per_utterance", "batch_min_crop")


@dataclass(frozen=True)
class MaskSpec:
    """Parameters of the span mask sampler.

    The defaults (start probability 0.065, span length 10) are the
    common masked-audio recipe values; they are configuration choices,
    not constants of this toolkit.
    """

    start_prob: float = 0.065
    span_len: int = 10
    mode: str = "per_utterance"
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.start_prob <= 1.0):
            raise ValueError(f"start_prob must be in [0, 1], got {self.start_prob}")
        if self.span_len < 1:
            raise ValueError(f"span_len must be >= 1, got {self.span_len}")
        if self.mode not in MASK_MODES:
            raise ValueError(f"mode must be one of {MASK_MODES}, got {self.mode!r}")


def _expand_starts(starts: np.ndarray, span_len: int, length: int) -> np.ndarray:
    mask = np.zeros(length, dtype=bool)
    for s in starts:
        mask[s : s + span_len] = True  # slice end clips at the boundary
    return mask


def _bernoulli_starts(rng: np.random.Generator, length: int, p: float) -> np.ndarray:
    return np.flatnonzero(rng.random(length) < p)


def sample_mask(length: int, spec: MaskSpec) -> np.ndarray:
    """Sample a boolean mask (True = masked) for one utterance.

    Deterministic in ``spec.seed``; every masked index is < ``length``.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    rng = np.random.default_rng(spec.seed)
    starts = _bernoulli_starts(rng, length, spec.start_prob)
    return _expand_starts(starts, spec.span_len, length)


def batch_span_starts(lengths, spec: MaskSpec) -> list[np.ndarray]:
    """Span start indices per utterance, after any batch-level cropping.

    In ``batch_min_crop`` mode every utterance keeps exactly
    ``min(counts)`` starts, chosen uniformly without replacement from
    its own sampled starts.  Per-utterance randomness uses child seeds
    derived from ``spec.seed`` so batches are reproducible.
    """
    lengths = [int(t) for t in lengths]
    if not lengths:
        raise EmptyBatchError("batch_masks needs at least one utterance")
    if any(t < 1 for t in lengths):
        raise ValueError("every utterance length must be >= 1")
    children = np.random.SeedSequence(spec.seed).spawn(len(lengths) + 1)
    starts = [
        _bernoulli_starts(np.random.default_rng(child), t, spec.start_prob)
        for child, t in zip(children, lengths)
    ]
    if spec.mode == "per_utterance":
        return starts
    n_min = min(len(s) for s in starts)
    crop_rng = np.random.default_rng(children[-1])
    cropped = []
    for s in starts:
        if len(s) == n_min:
            cropped.append(s)
        else:
            cropped.append(np.sort(crop_rng.choice(s, size=n_min, replace=False)))
    return cropped


def batch_masks(lengths, spec: MaskSpec) -> list[np.ndarray]:
    """Sample one boolean mask per utterance according to ``spec.mode``."""
    starts = batch_span_starts(lengths, spec)
    return [_expand_starts(s, spec.span_len, int(t)) for s, t in zip(starts, lengths)]


def expected_masked_fraction(spec: MaskSpec) -> float:
    """Large-T expectation of the masked fraction: 1 - (1 - p)^span_len."""
    return 1.0 - (1.0 - spec.start_prob) ** spec.span_len
