"""Bidirectional decoding: span extraction, pair fusion and sentiment assignment."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Tuple

import numpy as np

from . import _kernels as K
from .corpus import AnnotatedSentence, Sentiment, TokenSpan
from .encoder import InputTooLong
from .heads import TokenSpanProbabilities
from .queries import Direction, build_nonrestrictive_query, build_restrictive_query, build_sentiment_query

log = logging.getLogger(__name__)

DEFAULT_TAU = 0.5
DEFAULT_DELTA = 0.8
DEFAULT_MAX_SPAN_LEN = 8

PairKey = Tuple[TokenSpan, TokenSpan]


@dataclass(frozen=True)
class ScoredEntity:
    span: TokenSpan
    probability: float


@dataclass(frozen=True)
class ScoredPair:
    aspect: ScoredEntity
    opinion: ScoredEntity
    direction: Direction
    pair_probability: float

    @property
    def key(self) -> PairKey:
        return (self.aspect.span, self.opinion.span)


@dataclass
class PairSet:
    direction: Direction
    pairs: Dict[PairKey, ScoredPair] = field(default_factory=dict)

    def add(self, pair: ScoredPair) -> None:
        if pair.direction is not self.direction:
            raise ValueError(f"{pair.direction} pair added to a {self.direction} set")
        old = self.pairs.get(pair.key)
        if old is None or pair.pair_probability > old.pair_probability:
            self.pairs[pair.key] = pair

    def keys(self):
        return self.pairs.keys()

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs.values())


@dataclass(frozen=True)
class TripletPrediction:
    aspect: TokenSpan
    opinion: TokenSpan
    sentiment: Sentiment
    pair_probability: float
    sentiment_probability: float


def decode_spans(
    probs: TokenSpanProbabilities, tau: float = DEFAULT_TAU, max_span_len: int = DEFAULT_MAX_SPAN_LEN
) -> List[ScoredEntity]:
    """Pair start candidates with the nearest unused end candidate.

    Starts and ends are the tokens whose probability exceeds ``tau``. Each
    start, scanned left to right, takes the first unconsumed end at or after
    it; if that end is ``max_span_len`` or more tokens away the start is
    dropped.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau {tau} outside (0, 1)")
    if max_span_len < 1:
        raise ValueError("max_span_len must be >= 1")
    p_start = np.ascontiguousarray(probs.p_start, dtype=np.float64)
    p_end = np.ascontiguousarray(probs.p_end, dtype=np.float64)
    starts, ends = K.pair_spans(p_start, p_end, float(tau), int(max_span_len))
    return [
        ScoredEntity(TokenSpan(int(s), int(e)), float(p_start[s] * p_end[e])) for s, e in zip(starts, ends)
    ]


def run_direction(
    model,
    sentence: AnnotatedSentence,
    direction: Direction,
    tau: float = DEFAULT_TAU,
    max_span_len: int = DEFAULT_MAX_SPAN_LEN,
) -> PairSet:
    """Two-turn extraction in one direction.

    Pair probability is the first entity's probability times the second
    entity's probability under the restrictive query.
    """
    out = PairSet(direction)
    (first_probs,) = model.predict_spans(sentence, [build_nonrestrictive_query(direction)])
    for first in decode_spans(first_probs, tau, max_span_len):
        query = build_restrictive_query(direction, sentence.span_tokens(first.span), first.span)
        try:
            (second_probs,) = model.predict_spans(sentence, [query])
        except InputTooLong as exc:
            log.warning("skipping restrictive query for %s: %s", tuple(first.span), exc)
            continue
        for second in decode_spans(second_probs, tau, max_span_len):
            aspect, opinion = (first, second) if direction is Direction.AtoO else (second, first)
            out.add(ScoredPair(aspect, opinion, direction, first.probability * second.probability))
    return out


def fuse(v_ao: PairSet, v_oa: PairSet, delta: float = DEFAULT_DELTA) -> List[ScoredPair]:
    """Keep pairs found in both directions, plus one-sided pairs scoring above ``delta``.

    Pairs found by both directions report the higher of their two
    probabilities. The result is sorted by (aspect span, opinion span).
    """
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta {delta} outside [0, 1)")
    kept: Dict[PairKey, ScoredPair] = {}
    for key in v_ao.keys() | v_oa.keys():
        a, o = v_ao.pairs.get(key), v_oa.pairs.get(key)
        if a is not None and o is not None:
            kept[key] = a if a.pair_probability >= o.pair_probability else o
        else:
            only = a or o
            if only.pair_probability > delta:
                kept[key] = only
    return [kept[k] for k in sorted(kept)]


def classify_sentiments(model, sentence: AnnotatedSentence, fused: Iterable[ScoredPair]) -> List[TripletPrediction]:
    by_aspect: Dict[TokenSpan, List[ScoredPair]] = {}
    for pair in fused:
        by_aspect.setdefault(pair.aspect.span, []).append(pair)

    aspects, queries = [], []
    for aspect in sorted(by_aspect):
        pairs = sorted(by_aspect[aspect], key=lambda p: p.opinion.span)
        by_aspect[aspect] = pairs
        opinions = [p.opinion.span for p in pairs]
        q = build_sentiment_query(
            sentence.span_tokens(aspect), [sentence.span_tokens(o) for o in opinions], (aspect, *opinions)
        )
        aspects.append(aspect)
        queries.append(q)

    out = []
    for aspect, q in zip(aspects, queries):
        try:
            (dist,) = model.predict_sentiments(sentence, [q])
        except InputTooLong as exc:
            log.warning("skipping sentiment query for %s: %s", tuple(aspect), exc)
            continue
        k = int(np.argmax(dist))
        for pair in by_aspect[aspect]:
            out.append(
                TripletPrediction(aspect, pair.opinion.span, Sentiment.from_index(k),
                                  pair.pair_probability, float(dist[k]))
            )
    out.sort(key=lambda t: (t.aspect.start, t.opinion.start, t.aspect.end, t.opinion.end))
    return out


def extract_triplets(
    model,
    sentence: AnnotatedSentence,
    delta: float = DEFAULT_DELTA,
    tau: float = DEFAULT_TAU,
    max_span_len: int = DEFAULT_MAX_SPAN_LEN,
    direction: str = "both",
) -> List[TripletPrediction]:
    """Full pipeline. ``direction`` is ``both``, ``ao`` or ``oa``; the
    single-direction modes skip fusion."""
    if direction == "both":
        v_ao = run_direction(model, sentence, Direction.AtoO, tau, max_span_len)
        v_oa = run_direction(model, sentence, Direction.OtoA, tau, max_span_len)
        pairs = fuse(v_ao, v_oa, delta)
    elif direction in ("ao", "oa"):
        one = run_direction(model, sentence, Direction(direction), tau, max_span_len)
        pairs = [one.pairs[k] for k in sorted(one.keys())]
    else:
        raise ValueError(f"unknown direction mode {direction!r}")
    return classify_sentiments(model, sentence, pairs)
