"""Query templates and gold supervision for the three query families."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .corpus import AnnotatedSentence, Sentiment, TokenSpan


class Direction(enum.Enum):
    AtoO = "ao"
    OtoA = "oa"


class QueryKind(enum.Enum):
    NON_RESTRICTIVE = "non_restrictive"
    RESTRICTIVE = "restrictive"
    SENTIMENT = "sentiment"


@dataclass(frozen=True)
class Query:
    kind: QueryKind
    direction: Optional[Direction]
    text_tokens: Tuple[str, ...]
    anchor_spans: Tuple[TokenSpan, ...] = ()

    @property
    def text(self) -> str:
        return " ".join(self.text_tokens)

    def __len__(self) -> int:
        return len(self.text_tokens)


def _words(tokens: Sequence[str]) -> List[str]:
    return [t.lower() for t in tokens]


def build_nonrestrictive_query(direction: Direction) -> Query:
    target = "aspects" if direction is Direction.AtoO else "opinions"
    return Query(QueryKind.NON_RESTRICTIVE, direction, ("what", target, "?"))


def build_restrictive_query(
    direction: Direction, entity_tokens: Sequence[str], anchor: Optional[TokenSpan] = None
) -> Query:
    """Second-turn query conditioned on one extracted entity.

    ``anchor`` is the entity's span in the sentence; it is carried along so
    answers can be traced back to the entity that triggered them.
    """
    if not entity_tokens:
        raise ValueError("restrictive query needs a non-empty entity")
    entity = _words(entity_tokens)
    if direction is Direction.AtoO:
        words = ["what", "opinions", "given", "the", "aspect", *entity, "?"]
    else:
        words = ["what", "aspect", "does", "the", "opinion", *entity, "describe", "?"]
    anchors = (anchor,) if anchor is not None else ()
    return Query(QueryKind.RESTRICTIVE, direction, tuple(words), anchors)


def build_sentiment_query(
    aspect_tokens: Sequence[str],
    opinions: Sequence[Sequence[str]],
    anchors: Sequence[TokenSpan] = (),
) -> Query:
    """``anchors`` lists the aspect span first, then the opinion spans."""
    if not aspect_tokens:
        raise ValueError("sentiment query needs a non-empty aspect")
    if not opinions or any(not o for o in opinions):
        raise ValueError("sentiment query needs at least one non-empty opinion")
    words = ["what", "sentiment", "given", "the", "aspect", *_words(aspect_tokens), "and", "the", "opinion"]
    for k, o in enumerate(opinions):
        if k:
            words.append("/")
        words.extend(_words(o))
    words.append("?")
    return Query(QueryKind.SENTIMENT, None, tuple(words), tuple(anchors))


# every word a template can emit, independent of the interpolated entities
TEMPLATE_WORDS = (
    "what", "aspects", "opinions", "?", "given", "the", "aspect", "does",
    "opinion", "describe", "sentiment", "and", "/",
)


@dataclass(frozen=True)
class SpanLabels:
    start: np.ndarray
    end: np.ndarray

    @classmethod
    def from_spans(cls, n_tokens: int, spans: Sequence[TokenSpan]) -> "SpanLabels":
        start = np.zeros(n_tokens, dtype=np.int8)
        end = np.zeros(n_tokens, dtype=np.int8)
        for s in spans:
            start[s.start] = 1
            end[s.end] = 1
        return cls(start, end)

    def __eq__(self, other):
        if not isinstance(other, SpanLabels):
            return NotImplemented
        return np.array_equal(self.start, other.start) and np.array_equal(self.end, other.end)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class SupervisionInstance:
    sentence_id: str
    query: Query
    answer: Union[SpanLabels, Sentiment]

    def __post_init__(self):
        wants_class = self.query.kind is QueryKind.SENTIMENT
        if wants_class != isinstance(self.answer, Sentiment):
            raise ValueError(f"answer type {type(self.answer).__name__} does not match {self.query.kind}")


class SupervisionError(ValueError):
    pass


def _group(pairs, key_first: bool) -> Dict[TokenSpan, List[TokenSpan]]:
    grouped: Dict[TokenSpan, set] = {}
    for a, o in pairs:
        k, v = (a, o) if key_first else (o, a)
        grouped.setdefault(k, set()).add(v)
    return {k: sorted(v) for k, v in sorted(grouped.items())}


def derive_supervision(sentence: AnnotatedSentence) -> List[SupervisionInstance]:
    """Gold instances for one sentence, in a fixed order.

    Two first-turn instances, then A->O restrictive per aspect, O->A
    restrictive per opinion, then one sentiment instance per aspect.
    Entities are ordered by (start, end) throughout.
    """
    n = len(sentence.tokens)
    pairs = {(t.aspect, t.opinion) for t in sentence.triplets}
    by_aspect = _group(pairs, key_first=True)
    by_opinion = _group(pairs, key_first=False)

    polarity: Dict[TokenSpan, Sentiment] = {}
    for t in sentence.triplets:
        seen = polarity.setdefault(t.aspect, t.sentiment)
        if seen is not t.sentiment:
            raise SupervisionError(
                f"sentence {sentence.id}: aspect {tuple(t.aspect)} carries both "
                f"{seen.value} and {t.sentiment.value}"
            )

    sid = sentence.id
    out = [
        SupervisionInstance(sid, build_nonrestrictive_query(Direction.AtoO), SpanLabels.from_spans(n, list(by_aspect))),
        SupervisionInstance(sid, build_nonrestrictive_query(Direction.OtoA), SpanLabels.from_spans(n, list(by_opinion))),
    ]
    for aspect, opinions in by_aspect.items():
        q = build_restrictive_query(Direction.AtoO, sentence.span_tokens(aspect), aspect)
        out.append(SupervisionInstance(sid, q, SpanLabels.from_spans(n, opinions)))
    for opinion, aspects in by_opinion.items():
        q = build_restrictive_query(Direction.OtoA, sentence.span_tokens(opinion), opinion)
        out.append(SupervisionInstance(sid, q, SpanLabels.from_spans(n, aspects)))
    for aspect, opinions in by_aspect.items():
        q = build_sentiment_query(
            sentence.span_tokens(aspect), [sentence.span_tokens(o) for o in opinions], (aspect, *opinions)
        )
        out.append(SupervisionInstance(sid, q, polarity[aspect]))
    return out


def instance_to_json(inst: SupervisionInstance) -> str:
    """One-line debug rendering of an instance."""
    q = inst.query
    record = {
        "sentence_id": inst.sentence_id,
        "kind": q.kind.value,
        "direction": q.direction.value if q.direction else None,
        "query": q.text,
        "anchors": [list(a) for a in q.anchor_spans],
    }
    if isinstance(inst.answer, Sentiment):
        record["sentiment"] = inst.answer.value
    else:
        record["start"] = inst.answer.start.tolist()
        record["end"] = inst.answer.end.tolist()
    return json.dumps(record)


def dump_instances(path, instances) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            f.write(instance_to_json(inst) + "\n")
