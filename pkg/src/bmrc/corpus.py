"""Span-annotated review datasets.

Files use the line format circulated with the public ASTE benchmarks::

    the food was delicious####[([1], [3], 'POS')]

Each index list names the (contiguous) tokens of an aspect or opinion term.
"""

from __future__ import annotations

import ast
import enum
import random
from dataclasses import dataclass, field
from typing import Iterable, List, NamedTuple, Optional, Tuple

SEPARATOR = "####"


class CorpusError(ValueError):
    """Raised when a dataset line cannot be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class Sentiment(enum.Enum):
    POSITIVE = "POS"
    NEGATIVE = "NEG"
    NEUTRAL = "NEU"

    @property
    def index(self) -> int:
        return SENTIMENTS.index(self)

    @classmethod
    def from_index(cls, i: int) -> "Sentiment":
        return SENTIMENTS[i]


# class order used by the sentiment head
SENTIMENTS: Tuple[Sentiment, ...] = (Sentiment.POSITIVE, Sentiment.NEGATIVE, Sentiment.NEUTRAL)


class TokenSpan(NamedTuple):
    """Inclusive token range."""

    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def indices(self) -> List[int]:
        return list(range(self.start, self.end + 1))


class GoldTriplet(NamedTuple):
    aspect: TokenSpan
    opinion: TokenSpan
    sentiment: Sentiment


@dataclass(frozen=True)
class AnnotatedSentence:
    id: str
    tokens: Tuple[str, ...]
    triplets: Tuple[GoldTriplet, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "triplets", tuple(self.triplets))

    def __len__(self) -> int:
        return len(self.tokens)

    def span_tokens(self, span: TokenSpan) -> List[str]:
        return list(self.tokens[span.start : span.end + 1])

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass
class DatasetSplit:
    name: str
    sentences: List[AnnotatedSentence] = field(default_factory=list)

    def __post_init__(self):
        if self.name not in ("train", "dev", "test"):
            raise ValueError(f"unknown split name {self.name!r}")
        seen = set()
        for s in self.sentences:
            if s.id in seen:
                raise ValueError(f"duplicate sentence id {s.id!r} in split {self.name}")
            seen.add(s.id)

    @property
    def n_sentences(self) -> int:
        return len(self.sentences)

    @property
    def n_triplets(self) -> int:
        return sum(len(s.triplets) for s in self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __len__(self) -> int:
        return len(self.sentences)


def _parse_index_list(value, n_tokens: int, what: str, line_number: Optional[int]) -> TokenSpan:
    if not isinstance(value, (list, tuple)) or not value:
        raise CorpusError(f"{what} index list must be a non-empty list, got {value!r}", line_number)
    for i in value:
        if isinstance(i, bool) or not isinstance(i, int):
            raise CorpusError(f"non-integer {what} index {i!r}", line_number)
        if not 0 <= i < n_tokens:
            raise CorpusError(f"{what} index {i} out of range for {n_tokens} tokens", line_number)
    if list(value) != list(range(value[0], value[0] + len(value))):
        raise CorpusError(f"{what} index list {list(value)} is not a contiguous ascending run", line_number)
    return TokenSpan(value[0], value[-1])


def parse_line(line: str, sentence_id: str = "0", line_number: Optional[int] = None) -> AnnotatedSentence:
    """Parse one ``sentence####[(aspect, opinion, 'TAG'), ...]`` line."""
    line = line.rstrip("\r\n")
    if line.count(SEPARATOR) != 1:
        raise CorpusError(f"expected exactly one {SEPARATOR!r} separator", line_number)
    text, annotation = line.split(SEPARATOR)
    tokens = text.split()
    if not tokens:
        raise CorpusError("empty sentence", line_number)
    try:
        raw = ast.literal_eval(annotation.strip())
    except (ValueError, SyntaxError) as exc:
        raise CorpusError(f"malformed annotation list: {exc}", line_number) from None
    if not isinstance(raw, list):
        raise CorpusError("annotation must be a bracketed list", line_number)

    triplets = []
    for item in raw:
        if not isinstance(item, tuple) or len(item) != 3:
            raise CorpusError(f"annotation {item!r} is not a 3-tuple", line_number)
        aspect_ids, opinion_ids, tag = item
        aspect = _parse_index_list(aspect_ids, len(tokens), "aspect", line_number)
        opinion = _parse_index_list(opinion_ids, len(tokens), "opinion", line_number)
        try:
            sentiment = Sentiment(tag)
        except ValueError:
            raise CorpusError(f"unknown sentiment tag {tag!r}", line_number) from None
        triplets.append(GoldTriplet(aspect, opinion, sentiment))
    return AnnotatedSentence(sentence_id, tokens, triplets)


def serialize_line(sentence: AnnotatedSentence) -> str:
    """Inverse of :func:`parse_line` (the id is not part of the line)."""
    parts = [
        f"({t.aspect.indices()}, {t.opinion.indices()}, '{t.sentiment.value}')" for t in sentence.triplets
    ]
    return f"{sentence.text}{SEPARATOR}[{', '.join(parts)}]"


def load_split(path, name: str) -> DatasetSplit:
    """Read a dataset file; sentence ids are 1-based file line numbers."""
    sentences = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            sentences.append(parse_line(line, sentence_id=str(lineno), line_number=lineno))
    return DatasetSplit(name, sentences)


def write_split(path, sentences: Iterable[AnnotatedSentence]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in sentences:
            f.write(serialize_line(s) + "\n")


@dataclass(frozen=True)
class Violation:
    triplet_index: Optional[int]
    rule: str
    message: str


def validate(sentence: AnnotatedSentence) -> List[Violation]:
    violations = []
    n = len(sentence.tokens)
    if n == 0:
        violations.append(Violation(None, "non-empty", "sentence has no tokens"))
    for i, tok in enumerate(sentence.tokens):
        if not tok or any(c.isspace() for c in tok):
            violations.append(Violation(None, "token-form", f"token {i} ({tok!r}) is empty or contains whitespace"))
    for k, t in enumerate(sentence.triplets):
        if not isinstance(t.sentiment, Sentiment):
            violations.append(Violation(k, "sentiment", f"sentiment {t.sentiment!r} is not a known class"))
        for role, span in (("aspect", t.aspect), ("opinion", t.opinion)):
            if span.start > span.end:
                violations.append(Violation(k, "span-order", f"{role} start {span.start} > end {span.end}"))
            if span.start < 0 or span.end >= n or span.start >= n or span.end < 0:
                violations.append(Violation(k, "span-range", f"{role} span {tuple(span)} outside [0, {n})"))
    return violations


# ---------------------------------------------------------------------------
# synthetic fixtures

_POSITIVE = ["delicious", "fresh", "tasty", "friendly", "great", "superb", "very good"]
_NEGATIVE = ["bland", "slow", "rude", "overpriced", "terrible", "too salty", "not good"]
_NEUTRAL = ["average", "okay", "standard", "so so"]
_ASPECTS = [
    "food", "service", "staff", "pasta", "pizza", "decor", "menu", "waiter",
    "wine list", "battery life", "dessert menu", "sushi", "coffee", "price",
]
_FILLERS = [
    "we went there last friday", "my friend booked a table for two",
    "i have been here many times", "the place is near the station",
]
_LEXICON = {
    Sentiment.POSITIVE: _POSITIVE,
    Sentiment.NEGATIVE: _NEGATIVE,
    Sentiment.NEUTRAL: _NEUTRAL,
}


class _Builder:
    def __init__(self):
        self.tokens: List[str] = []
        self.triplets: List[GoldTriplet] = []

    def add(self, phrase: str) -> TokenSpan:
        words = phrase.split()
        start = len(self.tokens)
        self.tokens.extend(words)
        return TokenSpan(start, len(self.tokens) - 1)


def synthetic_corpus(n: int, seed: int = 0) -> List[AnnotatedSentence]:
    """Deterministic toy reviews covering single, one-to-many, many-to-one,
    multi-token and triplet-free sentences (cycled in that order)."""
    rng = random.Random(seed)
    out = []
    for i in range(n):
        b = _Builder()
        kind = i % 5
        pol = rng.choice(SENTIMENTS)
        if kind == 0:
            # single pair, possibly two clauses with different polarity
            x1, x2 = rng.sample(_ASPECTS, 2)
            b.add("the")
            a = b.add(x1)
            b.add("was")
            o = b.add(rng.choice(_LEXICON[pol]))
            b.triplets.append(GoldTriplet(a, o, pol))
            pol2 = rng.choice([p for p in SENTIMENTS if p is not pol])
            b.add("but the")
            a2 = b.add(x2)
            b.add("was")
            o2 = b.add(rng.choice(_LEXICON[pol2]))
            b.triplets.append(GoldTriplet(a2, o2, pol2))
        elif kind == 1:
            # one aspect, two opinions
            b.add("the")
            a = b.add(rng.choice(_ASPECTS))
            b.add("is")
            o1, o2 = rng.sample(_LEXICON[pol], 2)
            s1 = b.add(o1)
            b.add("and")
            s2 = b.add(o2)
            b.triplets += [GoldTriplet(a, s1, pol), GoldTriplet(a, s2, pol)]
        elif kind == 2:
            # two aspects, one opinion
            x1, x2 = rng.sample(_ASPECTS, 2)
            b.add("the")
            a1 = b.add(x1)
            b.add("and the")
            a2 = b.add(x2)
            b.add("were")
            o = b.add(rng.choice(_LEXICON[pol]))
            b.triplets += [GoldTriplet(a1, o, pol), GoldTriplet(a2, o, pol)]
        elif kind == 3:
            # multi-token aspect, opinion placed before it
            b.add("they have a")
            o = b.add(rng.choice(_LEXICON[pol]))
            a = b.add(rng.choice([x for x in _ASPECTS if " " in x]))
            b.add("here")
            b.triplets.append(GoldTriplet(a, o, pol))
        else:
            b.add(rng.choice(_FILLERS))
        out.append(AnnotatedSentence(f"syn-{i}", b.tokens, b.triplets))
    return out
