"""Line-delimited JSON formats written by the CLI.

Predictions file::

    {"format": "bmrc-predictions", "version": 1}
    {"id": "1", "triplets": [{"aspect": [1, 1], "opinion": [3, 3], "sentiment": "POS",
                              "pair_probability": 0.97, "sentiment_probability": 0.99}]}
    ...

Spans are inclusive ``[start, end]`` token indices; sentences with no
triplets still get a record with an empty list.
"""

from __future__ import annotations

import json
from typing import Dict, List, Mapping, Sequence

from .corpus import Sentiment, TokenSpan
from .inference import TripletPrediction

PREDICTIONS_FORMAT = "bmrc-predictions"
PREDICTIONS_VERSION = 1


class RecordError(ValueError):
    pass


def _triplet_record(t: TripletPrediction) -> dict:
    return {
        "aspect": [t.aspect.start, t.aspect.end],
        "opinion": [t.opinion.start, t.opinion.end],
        "sentiment": t.sentiment.value,
        "pair_probability": t.pair_probability,
        "sentiment_probability": t.sentiment_probability,
    }


def write_predictions(path, predictions: Mapping[str, Sequence[TripletPrediction]], ids: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps({"format": PREDICTIONS_FORMAT, "version": PREDICTIONS_VERSION}) + "\n")
        for sid in ids:
            rec = {"id": sid, "triplets": [_triplet_record(t) for t in predictions[sid]]}
            f.write(json.dumps(rec) + "\n")


def read_predictions(path) -> Dict[str, List[TripletPrediction]]:
    with open(path, encoding="utf-8") as f:
        lines = [line for line in f if line.strip()]
    if not lines:
        raise RecordError(f"{path}: missing header line")
    header = json.loads(lines[0])
    if header.get("format") != PREDICTIONS_FORMAT:
        raise RecordError(f"{path}: not a predictions file")
    out: Dict[str, List[TripletPrediction]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
            triplets = [
                TripletPrediction(
                    TokenSpan(*t["aspect"]),
                    TokenSpan(*t["opinion"]),
                    Sentiment(t["sentiment"]),
                    float(t["pair_probability"]),
                    float(t["sentiment_probability"]),
                )
                for t in rec["triplets"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordError(f"{path}: line {lineno}: {exc}") from None
        if rec["id"] in out:
            raise RecordError(f"{path}: duplicate id {rec['id']!r}")
        out[rec["id"]] = triplets
    return out
