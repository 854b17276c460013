"""Exact-match precision/recall/F1 on the four subtasks."""

from __future__ import annotations

import enum
import statistics
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Mapping, Sequence, Set


class MatchMode(enum.Enum):
    ASPECT_SENTIMENT = "A-S"
    OPINION = "O"
    PAIR = "P"
    TRIPLET = "T"


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return asdict(self)


def project(items: Iterable, mode: MatchMode) -> Set[tuple]:
    """Map triplet-like objects (``aspect``, ``opinion``, ``sentiment``) to
    comparable keys; duplicates collapse."""
    keys = set()
    for t in items:
        if mode is MatchMode.ASPECT_SENTIMENT:
            keys.add((tuple(t.aspect), t.sentiment))
        elif mode is MatchMode.OPINION:
            keys.add((tuple(t.opinion),))
        elif mode is MatchMode.PAIR:
            keys.add((tuple(t.aspect), tuple(t.opinion)))
        else:
            keys.add((tuple(t.aspect), tuple(t.opinion), t.sentiment))
    return keys


def prf_from_sets(pred: Set, gold: Set) -> PRF:
    if not pred and not gold:
        return PRF(1.0, 1.0, 1.0)
    hit = len(pred & gold)
    p = hit / len(pred) if pred else 0.0
    r = hit / len(gold) if gold else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return PRF(p, r, f)


def score(pred: Iterable, gold: Iterable, mode: MatchMode) -> PRF:
    return prf_from_sets(project(pred, mode), project(gold, mode))


def score_corpus(pred: Mapping[str, Sequence], gold: Mapping[str, Sequence], mode: MatchMode) -> PRF:
    """Micro-averaged score over sentences; keys are qualified by sentence id."""
    p = {(sid, k) for sid, items in pred.items() for k in project(items, mode)}
    g = {(sid, k) for sid, items in gold.items() for k in project(items, mode)}
    return prf_from_sets(p, g)


def score_all(pred: Mapping[str, Sequence], gold: Mapping[str, Sequence]) -> Dict[MatchMode, PRF]:
    return {m: score_corpus(pred, gold, m) for m in MatchMode}


def aggregate_runs(per_run: Sequence[PRF]) -> PRF:
    """Component-wise mean; F1 is averaged, not recomputed.

    ``statistics.mean`` sums exactly, so identical runs average to themselves
    and run order cannot change the result.
    """
    if not per_run:
        raise ValueError("aggregate_runs needs at least one run")
    return PRF(
        statistics.mean(r.precision for r in per_run),
        statistics.mean(r.recall for r in per_run),
        statistics.mean(r.f1 for r in per_run),
    )


def report_records(per_run: List[Dict[MatchMode, PRF]], split: str) -> List[dict]:
    """One record per (mode, split) with the mean and every run's values."""
    records = []
    for mode in MatchMode:
        runs = [r[mode] for r in per_run]
        mean = aggregate_runs(runs)
        records.append({
            "mode": mode.value,
            "split": split,
            **mean.to_dict(),
            "runs": [r.to_dict() for r in runs],
        })
    return records
