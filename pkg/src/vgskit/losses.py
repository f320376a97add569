"""Contrastive training objectives as pure numerical kernels.

Every loss returns ``(value, gradient)`` with the gradient derived
analytically; ``finite_difference_check`` is the independent oracle used
to validate those gradients.  All kernels are pure functions of their
inputs and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    InvalidDistributionError,
    MaskRowAllOnesError,
    NonFiniteEvaluationError,
    NonPositiveTemperatureError,
    ShapeMismatchError,
    ZeroVectorError,
)
from .validation import as_float_matrix, as_float_vector

VARIANTS = ("matching", "multitask")
REDUCTIONS = ("sum", "mean")


@dataclass(frozen=True)
class LossWeights:
    """Scalar weights combining the four objectives.

    Defaults follow the training recipe this toolkit targets: coarse
    matching weighted 0.1, fine matching 1.0, the masked-audio
    contrastive term 1.0 and the codebook diversity term 0.1.
    """

    coarse: float = 0.1
    fine: float = 1.0
    audio: float = 1.0
    diversity: float = 0.1

    def __post_init__(self):
        for name in ("coarse", "fine", "audio", "diversity"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"weight {name} must be finite and non-negative, got {v}")


def _one_direction(scores: np.ndarray, mask: np.ndarray, margin: float):
    """Per-row loss terms and gradient for one retrieval direction.

    Row ``i`` scores its diagonal entry (the matched pair) against every
    column ``j`` with ``mask[i, j] == 1``:

        term_i = -log( e^(S_ii - margin) / (e^(S_ii - margin) + sum_j mask_ij e^(S_ij)) )

    Log-sum-exp is computed with max subtraction so no intermediate
    overflows for |S| up to several hundred.  Returns ``(terms, grad)``
    where ``terms`` has shape (B,) and ``grad`` is the full (B, B)
    gradient of ``terms.sum()``.
    """
    b = scores.shape[0]
    pos = np.diag(scores) - margin
    neg = np.where(mask > 0, scores, -np.inf)  # exp(-inf) drops masked pairs cleanly
    shift = np.maximum(pos, neg.max(axis=1))
    e_pos = np.exp(pos - shift)
    e_neg = np.exp(neg - shift[:, None])
    denom = e_pos + e_neg.sum(axis=1)
    terms = np.log(denom) + shift - pos
    grad = e_neg / denom[:, None]
    idx = np.arange(b)
    grad[idx, idx] += e_pos / denom - 1.0
    return terms, grad


def _check_matching_inputs(scores, mask, margin):
    s = as_float_matrix(scores, "scores")
    m = np.asarray(mask, dtype=np.float64)
    if s.shape[0] != s.shape[1]:
        raise ShapeMismatchError(f"score matrix must be square, got {s.shape}")
    if m.shape != s.shape:
        raise ShapeMismatchError(f"mask shape {m.shape} != score shape {s.shape}")
    if not np.isin(m, (0.0, 1.0)).all():
        raise ValueError("mask entries must be 0 or 1")
    if not (np.isfinite(margin) and margin >= 0):
        raise ValueError(f"margin must be finite and non-negative, got {margin}")
    rows_without_positive = ~np.any(m == 0.0, axis=1)
    if rows_without_positive.any():
        bad = int(np.flatnonzero(rows_without_positive)[0])
        raise MaskRowAllOnesError(f"mask row {bad} has no zero: caption has no positive")
    return s, m


def matching_loss_terms(scores, mask, margin: float = 1.0):
    """Per-item loss terms for both directions of the matching loss.

    Returns ``(terms_a2i, terms_i2a)``: ``terms_a2i[i]`` treats row i's
    diagonal as the positive against its masked-in row negatives;
    ``terms_i2a[i]`` does the same down column i.
    """
    s, m = _check_matching_inputs(scores, mask, margin)
    terms_a2i, _ = _one_direction(s, m, margin)
    terms_i2a, _ = _one_direction(s.T, m.T, margin)
    return terms_a2i, terms_i2a


def matching_loss(scores, mask, margin: float = 1.0, reduction: str = "sum"):
    """Masked, marginalized InfoNCE over a square similarity matrix.

    ``scores[i, j]`` is the similarity between audio i and image j with
    matched pairs on the diagonal.  ``mask`` is 0 at matched pairs and 1
    elsewhere; zeros drop false negatives (e.g. other captions of the
    same image) from the denominators.  Both retrieval directions are
    summed.

    reduction="sum" adds the per-item terms of both directions (the
    convention used by the closed-form checks in the test suite);
    reduction="mean" divides each direction by the batch size instead.

    Returns ``(loss, grad)`` with ``grad`` the analytic gradient with
    respect to ``scores``.
    """
    if reduction not in REDUCTIONS:
        raise ValueError(f"reduction must be one of {REDUCTIONS}, got {reduction!r}")
    s, m = _check_matching_inputs(scores, mask, margin)
    terms_a2i, grad_a2i = _one_direction(s, m, margin)
    terms_i2a, grad_i2a_t = _one_direction(s.T, m.T, margin)
    loss = float(terms_a2i.sum() + terms_i2a.sum())
    grad = grad_a2i + grad_i2a_t.T
    if reduction == "mean":
        loss /= s.shape[0]
        grad = grad / s.shape[0]
    return loss, grad


def cosine_contrastive_loss(context, positive, distractors, temperature: float):
    """Softmax contrastive loss over cosine similarities.

    The context vector should be most similar to the positive quantized
    target among the candidate set {positive} + distractors:

        loss = -log( exp(cos(c, q)/t) / sum_u exp(cos(c, u)/t) )

    With zero distractors the softmax has a single element and the loss
    is exactly 0.  Returns ``(loss, grad_context, grad_positive,
    grad_distractors)`` with gradients analytic through the cosine.
    """
    if not (np.isfinite(temperature) and temperature > 0):
        raise NonPositiveTemperatureError(f"temperature must be > 0, got {temperature}")
    c = as_float_vector(context, "context")
    q = as_float_vector(positive, "positive")
    d = np.asarray(distractors, dtype=np.float64)
    if d.size == 0:
        d = np.empty((0, c.size), dtype=np.float64)
    if d.ndim == 1:
        d = d[None, :]
    if d.ndim != 2 or q.size != c.size or d.shape[1] != c.size:
        raise ShapeMismatchError(
            f"context dim {c.size}, positive dim {q.size}, distractor dims {d.shape} disagree"
        )
    if d.shape[0] and not np.isfinite(d).all():
        raise ValueError("distractors contain NaN or Inf")

    cands = np.vstack([q[None, :], d])  # positive first
    c_norm = np.linalg.norm(c)
    cand_norms = np.linalg.norm(cands, axis=1)
    if c_norm == 0.0 or (cand_norms == 0.0).any():
        raise ZeroVectorError("cosine similarity is undefined for zero-norm vectors")

    cos = (cands @ c) / (cand_norms * c_norm)
    logits = cos / temperature
    shift = logits.max()
    exp = np.exp(logits - shift)
    total = exp.sum()
    loss = float(-logits[0] + shift + np.log(total))
    p = exp / total

    # dL/dlogit_m = p_m - [m == 0]; chain through the cosine of each pair
    coeff = p.copy()
    coeff[0] -= 1.0
    coeff /= temperature
    # d cos(c, u)/dc = u/(|c||u|) - cos * c/|c|^2
    grad_context = (coeff / cand_norms) @ cands / c_norm - (coeff @ cos) * c / c_norm**2
    # d cos(c, u)/du = c/(|c||u|) - cos * u/|u|^2
    grad_cands = (
        coeff[:, None] * (c[None, :] / (c_norm * cand_norms[:, None])
                          - cos[:, None] * cands / cand_norms[:, None] ** 2)
    )
    return loss, grad_context, grad_cands[0], grad_cands[1:]


def diversity_loss(assign_probs, negate_diversity: bool = False, validate: bool = True,
                   row_sum_tol: float = 1e-6):
    """Mean signed entropy of per-group codeword assignment distributions.

    For a (groups x entries) matrix of mean assignment probabilities:

        loss = (1 / (G * V)) * sum_{g,v} p[g, v] * log p[g, v]

    with 0*log(0) = 0.  The value lies in [-ln(V)/V, 0]; it is most
    negative at uniform usage and 0 when every group collapses to a
    single entry, so adding it to a minimized objective pushes toward
    collapse.  ``negate_diversity`` flips the sign for recipes that
    reward uniform codebook usage instead.  ``validate=False`` skips the
    row-sum check so the kernel can be probed at off-simplex points
    (finite differences).

    Returns ``(loss, grad)`` with grad of shape (G, V); at entries with
    p == 0 the gradient is reported as 0 by the same boundary convention.
    """
    p = as_float_matrix(assign_probs, "assign_probs")
    if validate:
        if (p < 0).any() or (p > 1 + row_sum_tol).any():
            raise ValueError("assignment probabilities must lie in [0, 1]")
        row_sums = p.sum(axis=1)
        if np.abs(row_sums - 1.0).max() > row_sum_tol:
            bad = int(np.abs(row_sums - 1.0).argmax())
            raise InvalidDistributionError(f"row {bad} sums to {row_sums[bad]!r}, expected 1")
    g, v = p.shape
    scale = 1.0 / (g * v)
    positive = p > 0
    plogp = np.zeros_like(p)
    plogp[positive] = p[positive] * np.log(p[positive])
    grad = np.zeros_like(p)
    grad[positive] = scale * (np.log(p[positive]) + 1.0)
    loss = float(scale * plogp.sum())
    if negate_diversity:
        return -loss, -grad
    return loss, grad


def total_objective(matching_coarse, matching_fine, audio_contrastive=0.0,
                    codebook_diversity=0.0, weights: LossWeights | None = None,
                    variant: str = "multitask") -> float:
    """Weighted combination of the four scalar losses.

    variant="matching" uses only the coarse and fine matching terms;
    variant="multitask" adds the audio-contrastive and diversity terms.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    w = weights if weights is not None else LossWeights()
    parts = [matching_coarse, matching_fine, audio_contrastive, codebook_diversity]
    if not all(np.isfinite(x) for x in parts):
        raise ValueError("loss inputs must be finite")
    total = w.coarse * matching_coarse + w.fine * matching_fine
    if variant == "multitask":
        total += w.audio * audio_contrastive + w.diversity * codebook_diversity
    return float(total)


def finite_difference_check(f, x0, analytic_grad, eps: float = 1e-5) -> float:
    """Max relative error between an analytic gradient and central differences.

    ``f`` maps a flat float vector to a scalar; ``analytic_grad`` is the
    gradient of ``f`` at ``x0`` (same flattened shape).  For each
    coordinate the central difference (f(x+eps) - f(x-eps)) / (2 eps) is
    compared as |g_analytic - g_fd| / max(1e-12, |g_fd|); the maximum
    over coordinates is returned.
    """
    if not (np.isfinite(eps) and eps > 0):
        raise ValueError(f"eps must be finite and positive, got {eps}")
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    g = np.asarray(analytic_grad, dtype=np.float64).ravel()
    if g.shape != x0.shape:
        raise ShapeMismatchError(f"gradient shape {g.shape} != point shape {x0.shape}")
    worst = 0.0
    for i in range(x0.size):
        xp = x0.copy()
        xp[i] += eps
        xm = x0.copy()
        xm[i] -= eps
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteEvaluationError(f"f returned a non-finite value near coordinate {i}")
        g_fd = (fp - fm) / (2.0 * eps)
        err = abs(g[i] - g_fd) / max(1e-12, abs(g_fd))
        worst = max(worst, err)
    return worst
