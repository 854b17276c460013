"""Encoder + heads bundled behind the interface the inference code expects.

Anything with ``predict_spans(sentence, queries)`` and
``predict_sentiments(sentence, queries)`` can drive inference; this class is
the trainable implementation.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from .corpus import AnnotatedSentence, Sentiment
from .encoder import (
    Batch,
    EncoderConfig,
    Params,
    Vocabulary,
    build_combined_input,
    embed,
    embed_backward,
    encode,
    encode_backward,
    init_encoder_params,
)
from .heads import (
    TokenSpanProbabilities,
    init_head_params,
    predict_sentiment,
    predict_span_probs,
    sentiment_head_loss,
    span_head_loss,
)
from .queries import Query, QueryKind, SpanLabels, SupervisionInstance

Example = Tuple[AnnotatedSentence, SupervisionInstance]


class BMRCModel:
    def __init__(
        self,
        config: EncoderConfig,
        vocab: Vocabulary,
        params: Optional[Params] = None,
        seed: int = 0,
        dtype=np.float32,
    ):
        self.config = config
        self.vocab = vocab
        if params is None:
            rng = np.random.default_rng(seed)
            params = init_encoder_params(config, len(vocab), rng, dtype)
            params.update(init_head_params(config.d_h, rng, dtype))
        self.params = {k: np.ascontiguousarray(v, dtype=dtype) for k, v in params.items()}
        self.dtype = np.dtype(dtype)

    def copy(self, dtype=None) -> "BMRCModel":
        return BMRCModel(self.config, self.vocab, {k: v.copy() for k, v in self.params.items()},
                         dtype=dtype or self.dtype)

    def _forward(self, pairs: Sequence[Tuple[AnnotatedSentence, Query]], train=False, rng=None):
        inputs = [build_combined_input(q, s, self.vocab, self.config.max_len) for s, q in pairs]
        batch = Batch.collate(inputs, self.vocab.pad_id)
        E = embed(batch, self.params)
        H, caches = encode(E, batch.mask, self.params, self.config, train=train, rng=rng)
        return batch, H, caches

    # -- inference interface -------------------------------------------------

    def predict_spans(self, sentence: AnnotatedSentence, queries: Sequence[Query]) -> List[TokenSpanProbabilities]:
        if not queries:
            return []
        batch, H, _ = self._forward([(sentence, q) for q in queries])
        n = len(sentence.tokens)
        return [predict_span_probs(H[b], int(batch.query_len[b]), n, self.params) for b in range(len(batch))]

    def predict_sentiments(self, sentence: AnnotatedSentence, queries: Sequence[Query]) -> List[np.ndarray]:
        if not queries:
            return []
        _, H, _ = self._forward([(sentence, q) for q in queries])
        return [predict_sentiment(H[b], self.params) for b in range(H.shape[0])]

    # -- training ------------------------------------------------------------

    def loss_and_grads(self, examples: Sequence[Example], train=False, rng=None, with_grads=True):
        """Summed losses ``(l_n, l_r, l_s)`` over ``examples`` and, optionally,
        the gradient of their sum with respect to every parameter."""
        batch, H, caches = self._forward([(s, inst.query) for s, inst in examples], train, rng)
        B, L, _ = H.shape
        weight = np.zeros((B, L), dtype=H.dtype)
        start = np.zeros((B, L), dtype=H.dtype)
        end = np.zeros((B, L), dtype=H.dtype)
        kinds = []
        sent_rows, sent_gold = [], []
        for b, (s, inst) in enumerate(examples):
            kinds.append(inst.query.kind)
            if isinstance(inst.answer, Sentiment):
                sent_rows.append(b)
                sent_gold.append(inst.answer.index)
                continue
            lo = int(batch.query_len[b]) + 2
            n = len(s.tokens)
            labels: SpanLabels = inst.answer
            if len(labels.start) != n:
                raise ValueError(f"sentence {s.id}: labels cover {len(labels.start)} tokens, sentence has {n}")
            weight[b, lo : lo + n] = 1
            start[b, lo : lo + n] = labels.start
            end[b, lo : lo + n] = labels.end

        dH = np.zeros_like(H) if with_grads else None
        grads: Params = {} if with_grads else None
        span_rows = span_head_loss(H, weight, start, end, self.params, dH, grads)
        sent = sentiment_head_loss(H, np.array(sent_rows, dtype=np.int64), np.array(sent_gold, dtype=np.int64),
                                   self.params, dH, grads)
        kinds_arr = np.array([k.value for k in kinds])
        l_n = float(span_rows[kinds_arr == QueryKind.NON_RESTRICTIVE.value].sum())
        l_r = float(span_rows[kinds_arr == QueryKind.RESTRICTIVE.value].sum())
        l_s = float(sent.sum())
        if not with_grads:
            return (l_n, l_r, l_s), None
        dE = encode_backward(dH, caches, self.params, self.config, grads)
        embed_backward(batch, self.params, dE, grads)
        grads = {k: np.asarray(grads[k], dtype=self.dtype) for k in self.params}
        return (l_n, l_r, l_s), grads
