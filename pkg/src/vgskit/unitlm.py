"""Lexical/syntactic scoring over discrete unit sequences.

A pseudo-probability for an utterance is the log of the product of
sampled spans' probabilities under a unit language model.  The LM is a
pluggable contract (``log_prob_span``); the shipped implementation is an
interpolated add-k n-gram, which approximates a masked LM's span
probability with the left-context chain probability.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .exceptions import EmptyCorpusError, LengthMismatchError
from .validation import units_list

BOS = -1  # begin-of-sequence padding token; never predicted


@dataclass(frozen=True)
class SpanSpec:
    """Span sampler parameters.

    Lengths are drawn from round(Normal(mean_len, std_len)) clamped to
    [1, T]; spans are added (overlaps allowed) until the union covers at
    least ``coverage`` of the sequence, overshooting rather than
    trimming the final span.
    """

    mean_len: float = 5.0
    std_len: float = 5.0
    coverage: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.mean_len) and self.mean_len > 0):
            raise ValueError(f"mean_len must be positive, got {self.mean_len}")
        if not (np.isfinite(self.std_len) and self.std_len >= 0):
            raise ValueError(f"std_len must be non-negative, got {self.std_len}")
        if not (0.0 < self.coverage <= 1.0):
            raise ValueError(f"coverage must be in (0, 1], got {self.coverage}")


def span_sample(length: int, spec: SpanSpec) -> list[tuple[int, int]]:
    """Sample (start, len) spans until union coverage reaches the target.

    Deterministic in ``spec.seed``; spans may overlap and never extend
    past the sequence end.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    rng = np.random.default_rng(spec.seed)
    covered = np.zeros(length, dtype=bool)
    target = spec.coverage * length
    spans: list[tuple[int, int]] = []
    while covered.sum() < target:
        span_len = int(np.rint(rng.normal(spec.mean_len, spec.std_len)))
        span_len = max(1, min(span_len, length))
        start = int(rng.integers(0, length - span_len + 1))
        spans.append((start, span_len))
        covered[start : start + span_len] = True
    return spans


@runtime_checkable
class UnitLM(Protocol):
    """Contract every unit language model fulfills."""

    def log_prob_span(self, units, start: int, length: int) -> float:
        """Log-probability of ``units[start:start+length]`` given the sequence."""
        ...


class NGramUnitLM(BaseEstimator):
    """Interpolated add-k n-gram over discrete unit sequences.

    Orders 1..n are mixed with ``interp_weights`` (uniform by default);
    each order is add-k smoothed so every conditional distribution over
    the unit vocabulary sums to one, including unseen contexts.
    Sequence starts are padded with a begin-of-sequence token that
    appears only in contexts, never as a predicted unit.

    ``log_prob_span`` scores a span by its left-context chain
    probability, an approximation of a bidirectional model's masked-span
    probability.
    """

    def __init__(self, order: int = 3, add_k: float = 1.0,
                 vocab_size: int | None = None,
                 interp_weights: Sequence[float] | None = None):
        self.order = order
        self.add_k = add_k
        self.vocab_size = vocab_size
        self.interp_weights = interp_weights

    def fit(self, sequences):
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        if not (np.isfinite(self.add_k) and self.add_k > 0):
            raise ValueError(f"add_k must be > 0, got {self.add_k}")
        corpus = [units_list(seq) for seq in sequences]
        if not corpus:
            raise EmptyCorpusError("training corpus is empty")
        if self.interp_weights is None:
            weights = np.full(self.order, 1.0 / self.order)
        else:
            weights = np.asarray(self.interp_weights, dtype=np.float64)
            if weights.size != self.order:
                raise ValueError(f"need {self.order} interpolation weights, got {weights.size}")
            if (weights < 0).any() or weights.sum() <= 0:
                raise ValueError("interpolation weights must be non-negative with positive sum")
            weights = weights / weights.sum()
        max_unit = max(max(seq) for seq in corpus)
        vocab = self.vocab_size if self.vocab_size is not None else max_unit + 1
        if vocab <= max_unit:
            raise ValueError(f"vocab_size {vocab} too small for unit id {max_unit}")

        counts: list[dict[tuple[int, ...], Counter]] = [defaultdict(Counter)
                                                        for _ in range(self.order)]
        totals: list[dict[tuple[int, ...], int]] = [defaultdict(int)
                                                    for _ in range(self.order)]
        pad = [BOS] * (self.order - 1)
        for seq in corpus:
            padded = pad + seq
            for t, unit in enumerate(seq):
                hist_end = t + self.order - 1
                for m in range(1, self.order + 1):
                    ctx = tuple(padded[hist_end - (m - 1) : hist_end])
                    counts[m - 1][ctx][unit] += 1
                    totals[m - 1][ctx] += 1
        self.counts_ = [dict(c) for c in counts]
        self.totals_ = [dict(t) for t in totals]
        self.weights_ = weights
        self.vocab_size_ = int(vocab)
        self.n_sequences_ = len(corpus)
        return self

    def _check_fitted(self):
        if not hasattr(self, "counts_"):
            raise NotFittedError("NGramUnitLM must be fitted before scoring")

    def conditional_prob(self, history: Sequence[int], unit: int) -> float:
        """Interpolated P(unit | history), history most-recent-last."""
        self._check_fitted()
        if not 0 <= unit < self.vocab_size_:
            raise ValueError(f"unit {unit} outside vocabulary of size {self.vocab_size_}")
        hist = [BOS] * max(0, self.order - 1 - len(history)) + [int(u) for u in history]
        prob = 0.0
        for m in range(1, self.order + 1):
            ctx = tuple(hist[len(hist) - (m - 1) :]) if m > 1 else ()
            seen = self.counts_[m - 1].get(ctx)
            count = seen.get(unit, 0) if seen else 0
            total = self.totals_[m - 1].get(ctx, 0)
            p_m = (count + self.add_k) / (total + self.add_k * self.vocab_size_)
            prob += self.weights_[m - 1] * p_m
        return prob

    def log_prob_span(self, units, start: int, length: int) -> float:
        """Left-context chain log-probability of one span."""
        seq = units_list(units)
        if not (0 <= start and length >= 1 and start + length <= len(seq)):
            raise ValueError(
                f"span ({start}, {length}) outside sequence of length {len(seq)}"
            )
        total = 0.0
        for t in range(start, start + length):
            total += float(np.log(self.conditional_prob(seq[:t], seq[t])))
        return total

    def sequence_log_prob(self, units) -> float:
        """Chain-rule log-probability of a whole sequence."""
        seq = units_list(units)
        return self.log_prob_span(seq, 0, len(seq))

    def save(self, path) -> None:
        """Serialize counts to JSON; deterministic byte output."""
        self._check_fitted()
        payload = {
            "order": self.order,
            "add_k": self.add_k,
            "vocab_size": self.vocab_size_,
            "interp_weights": list(map(float, self.weights_)),
            "counts": [
                {" ".join(map(str, ctx)): dict(sorted(c.items())) for ctx, c in sorted(level.items())}
                for level in self.counts_
            ],
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "NGramUnitLM":
        payload = json.loads(Path(path).read_text())
        model = cls(
            order=int(payload["order"]),
            add_k=float(payload["add_k"]),
            vocab_size=int(payload["vocab_size"]),
            interp_weights=payload["interp_weights"],
        )
        counts: list[dict[tuple[int, ...], Counter]] = []
        totals: list[dict[tuple[int, ...], int]] = []
        for level in payload["counts"]:
            level_counts: dict[tuple[int, ...], Counter] = {}
            level_totals: dict[tuple[int, ...], int] = {}
            for ctx_key, c in level.items():
                ctx = tuple(int(t) for t in ctx_key.split()) if ctx_key else ()
                counter = Counter({int(u): int(n) for u, n in c.items()})
                level_counts[ctx] = counter
                level_totals[ctx] = sum(counter.values())
            counts.append(level_counts)
            totals.append(level_totals)
        model.counts_ = counts
        model.totals_ = totals
        model.weights_ = np.asarray(payload["interp_weights"], dtype=np.float64)
        model.vocab_size_ = int(payload["vocab_size"])
        model.n_sequences_ = -1
        return model


def ngram_train(sequences, order: int, add_k: float = 1.0) -> NGramUnitLM:
    """Fit an :class:`NGramUnitLM` on a corpus of unit sequences."""
    return NGramUnitLM(order=order, add_k=add_k).fit(sequences)


def pseudo_logprob(lm: UnitLM, units, spec: SpanSpec) -> float:
    """Sum of sampled spans' log-probabilities under ``lm``.

    This is the log of the product of span probabilities; with a proper
    LM it is always <= 0, and it is a pure function of (lm, units, spec)
    because the span sampler is seeded.
    """
    seq = units_list(units)
    spans = span_sample(len(seq), spec)
    return float(sum(lm.log_prob_span(seq, start, length) for start, length in spans))


def pseudo_logprob_repeated(lm: UnitLM, units, spec: SpanSpec, repeats: int = 1) -> float:
    """Mean pseudo log-probability over ``repeats`` span samplings.

    Repeat seeds are derived from ``spec.seed`` so the result stays a
    pure function of its inputs.
    """
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    if repeats == 1:
        return pseudo_logprob(lm, units, spec)
    children = np.random.SeedSequence(spec.seed).spawn(repeats)
    scores = [
        pseudo_logprob(lm, units, replace(spec, seed=int(child.generate_state(1, np.uint64)[0])))
        for child in children
    ]
    return float(np.mean(scores))


def paired_accuracy(pos_scores, neg_scores) -> float:
    """Fraction of pairs where the positive outscores the negative.

    Ties count 0.5, so swapping the arguments of a tie-free comparison
    gives complementary accuracies.
    """
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    if pos.size != neg.size:
        raise LengthMismatchError(f"length mismatch: {pos.size} vs {neg.size}")
    if pos.size == 0:
        raise ValueError("need at least one score pair")
    if not (np.isfinite(pos).all() and np.isfinite(neg).all()):
        raise ValueError("scores contain NaN or Inf")
    wins = (pos > neg).sum() + 0.5 * (pos == neg).sum()
    return float(wins / pos.size)
