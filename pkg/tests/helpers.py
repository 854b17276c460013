"""Test helpers shared across modules."""

import numpy as np
from hypothesis import strategies as st
from bmrc.corpus import AnnotatedSentence, GoldTriplet, Sentiment, TokenSpan
from bmrc.heads import TokenSpanProbabilities
from bmrc.queries import QueryKind, SpanLabels, derive_supervision


class GoldModel:
    """Answers every query from derive_supervision's labels (a perfectly fitted model)."""

    def __init__(self, sentences):
        self.span_answers = {}
        self.sentiment_answers = {}
        for s in sentences:
            for inst in derive_supervision(s):
                q = inst.query
                if q.kind is QueryKind.SENTIMENT:
                    self.sentiment_answers[(s.id, q.anchor_spans[0])] = inst.answer
                else:
                    anchor = q.anchor_spans[0] if q.anchor_spans else None
                    self.span_answers[(s.id, q.kind, q.direction, anchor)] = inst.answer

    def predict_spans(self, sentence, queries):
        out = []
        for q in queries:
            anchor = q.anchor_spans[0] if q.anchor_spans else None
            labels = self.span_answers.get((sentence.id, q.kind, q.direction, anchor))
            if labels is None:
                labels = SpanLabels.from_spans(len(sentence.tokens), [])
            out.append(TokenSpanProbabilities(labels.start.astype(float), labels.end.astype(float)))
        return out

    def predict_sentiments(self, sentence, queries):
        out = []
        for q in queries:
            gold = self.sentiment_answers[(sentence.id, q.anchor_spans[0])]
            dist = np.zeros(3)
            dist[gold.index] = 1.0
            out.append(dist)
        return out


def make_sentence(text, triplets, sid="s"):
    toks = text.split()
    return AnnotatedSentence(
        sid, toks, [GoldTriplet(TokenSpan(*a), TokenSpan(*o), Sentiment(t)) for a, o, t in triplets]
    )


@st.composite
def sentences(draw):
    n = draw(st.integers(1, 12))
    words = draw(st.lists(st.text("abcdefgh", min_size=1, max_size=5), min_size=n, max_size=n))

    def span():
        a = draw(st.integers(0, n - 1))
        b = draw(st.integers(a, min(n - 1, a + 3)))
        return TokenSpan(a, b)

    trips = [GoldTriplet(span(), span(), draw(st.sampled_from(list(Sentiment)))) for _ in range(draw(st.integers(0, 4)))]
    return AnnotatedSentence("0", words, trips)


def randomize_parameters(model, seed=1, scale=0.3):
    """Move a model away from its near-uniform-attention init.

    At the std-0.02 init the query/key gradients sit below central-difference
    noise, so gradient checks use a point like this instead.
    """
    rng = np.random.default_rng(seed)
    for name, v in model.params.items():
        if "gain" in name:
            v[...] = 1 + 0.1 * rng.standard_normal(v.shape)
        else:
            v[...] = scale * rng.standard_normal(v.shape)
    return model


def random_pair_sets(rng, max_pairs=10, pool=4):
    """Two directional pair sets drawn from a small span pool so they overlap."""
    from bmrc.inference import PairSet, ScoredEntity, ScoredPair
    from bmrc.queries import Direction

    spans = [TokenSpan(i, i + int(rng.integers(0, 2))) for i in range(0, 3 * pool, 3)]
    out = []
    for direction in (Direction.AtoO, Direction.OtoA):
        ps = PairSet(direction)
        for _ in range(int(rng.integers(0, max_pairs + 1))):
            a = spans[int(rng.integers(pool))]
            o = spans[int(rng.integers(pool))]
            p = float(rng.uniform(np.nextafter(0.0, 1.0), 1.0))
            ps.add(ScoredPair(ScoredEntity(a, 1.0), ScoredEntity(o, p), direction, p))
        out.append(ps)
    return out


def brute_force_fusion(v_ao, v_oa, delta):
    """Intersection plus above-threshold difference-set pairs, as plain key sets."""
    ao = {(p.aspect.span, p.opinion.span): p.pair_probability for p in v_ao}
    oa = {(p.aspect.span, p.opinion.span): p.pair_probability for p in v_oa}
    inter = set(ao) & set(oa)
    diff = (set(ao) - set(oa)) | (set(oa) - set(ao))
    kept = set(inter)
    for key in diff:
        prob = ao[key] if key in ao else oa[key]
        if prob > delta:
            kept.add(key)
    return kept
