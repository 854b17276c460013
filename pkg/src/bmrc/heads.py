"""Span start/end classifiers and the sentiment classifier.

Both heads are bias-free linear maps followed by a softmax: two classes per
sentence token for the span heads, three classes on the ``[CLS]`` row for
sentiment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import Params

LOG_FLOOR = float(np.log(1e-12))


class HeadError(ValueError):
    pass


@dataclass
class TokenSpanProbabilities:
    """Positive-class probabilities for the sentence tokens only."""

    p_start: np.ndarray
    p_end: np.ndarray

    def __post_init__(self):
        if self.p_start.shape != self.p_end.shape or self.p_start.ndim != 1:
            raise HeadError("p_start and p_end must be 1-D arrays of equal length")

    def __len__(self) -> int:
        return len(self.p_start)


def init_head_params(d_h: int, rng: np.random.Generator, dtype=np.float32) -> Params:
    return {
        "span.start": (rng.standard_normal((d_h, 2)) * 0.02).astype(dtype),
        "span.end": (rng.standard_normal((d_h, 2)) * 0.02).astype(dtype),
        "sentiment": (rng.standard_normal((d_h, 3)) * 0.02).astype(dtype),
    }


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def sentence_rows(H: np.ndarray, query_len: int) -> np.ndarray:
    """Rows of one unpadded hidden sequence that belong to sentence tokens."""
    return H[query_len + 2 :]


def predict_span_probs(H: np.ndarray, query_len: int, n_tokens: int, params: Params) -> TokenSpanProbabilities:
    """Start/end probabilities for one hidden sequence of shape (L, d)."""
    if H.ndim != 2 or H.shape[0] < query_len + 2 + n_tokens:
        raise HeadError(f"hidden sequence with {H.shape[0]} rows cannot hold query {query_len} + sentence {n_tokens}")
    rows = H[query_len + 2 : query_len + 2 + n_tokens]
    return TokenSpanProbabilities(
        softmax(rows @ params["span.start"])[:, 1],
        softmax(rows @ params["span.end"])[:, 1],
    )


def predict_sentiment(H: np.ndarray, params: Params) -> np.ndarray:
    if H.ndim != 2 or H.shape[0] == 0:
        raise HeadError("sentiment head needs a non-empty (L, d) hidden sequence")
    return softmax(H[0] @ params["sentiment"])


# ---------------------------------------------------------------------------
# batched loss + gradient


def span_head_loss(H, weight, start_gold, end_gold, params: Params, dH=None, grads=None):
    """Per-row two-class cross-entropy of start and end indicators, shape (B,).

    ``weight`` (B, L) is 1 on scored sentence positions and 0 elsewhere;
    gold arrays hold 0/1 per position. When ``dH`` / ``grads`` are given the
    gradient of the summed loss is accumulated into them. Log-probabilities
    are floored at log(1e-12); floored entries carry no gradient.
    """
    per_row = np.zeros(H.shape[0])
    for name, gold in (("span.start", start_gold), ("span.end", end_gold)):
        W = params[name]
        logp = log_softmax(H @ W)
        picked = np.where(gold == 1, logp[..., 1], logp[..., 0])
        per_row -= (np.maximum(picked, LOG_FLOOR) * weight).sum(axis=1, dtype=np.float64)
        if dH is not None:
            dz = np.exp(logp)
            dz[..., 1] -= gold
            dz[..., 0] -= 1 - gold
            dz *= (weight * (picked > LOG_FLOOR))[..., None].astype(dz.dtype)
            grads[name] = grads.get(name, 0) + np.einsum("bld,blc->dc", H, dz)
            dH += dz @ W.T
    return per_row


def sentiment_head_loss(H, rows, gold, params: Params, dH=None, grads=None):
    """Per-row cross-entropy of the [CLS] sentiment classifier on batch ``rows``."""
    W = params["sentiment"]
    if len(rows) == 0:
        if grads is not None:
            grads["sentiment"] = grads.get("sentiment", 0) + np.zeros_like(W)
        return np.zeros(0)
    h = H[rows, 0]
    logp = log_softmax(h @ W)
    picked = logp[np.arange(len(rows)), gold]
    per_row = -np.maximum(picked, LOG_FLOOR).astype(np.float64)
    if dH is not None:
        dz = np.exp(logp)
        dz[np.arange(len(rows)), gold] -= 1.0
        dz *= (picked > LOG_FLOOR)[:, None].astype(dz.dtype)
        grads["sentiment"] = grads.get("sentiment", 0) + h.T @ dz
        dH[rows, 0] += dz @ W.T
    return per_row
