"""Joint objective, AdamW optimisation and finite-difference gradient checks."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .corpus import AnnotatedSentence, DatasetSplit, Sentiment
from .evaluation import MatchMode, PRF, score_all
from .heads import TokenSpanProbabilities
from .inference import DEFAULT_DELTA, DEFAULT_MAX_SPAN_LEN, DEFAULT_TAU, extract_triplets
from .model import BMRCModel, Example
from .queries import SpanLabels, derive_supervision

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
HEAD_PARAMS = ("span.start", "span.end", "sentiment")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class LossBreakdown:
    l_n: float
    l_r: float
    l_s: float
    total: float

    def __post_init__(self):
        if min(self.l_n, self.l_r, self.l_s) < 0:
            raise ValueError("loss components must be non-negative")


def total_loss(l_n: float, l_r: float, l_s: float) -> LossBreakdown:
    return LossBreakdown(l_n, l_r, l_s, l_n + l_r + l_s)


def _clamped_log(p):
    return np.log(np.maximum(p, PROB_FLOOR))


def span_loss(labels: Sequence[SpanLabels], probs: Sequence[TokenSpanProbabilities]) -> float:
    """Summed binary cross-entropy of start and end indicators."""
    if len(labels) != len(probs):
        raise ValueError("labels and predictions differ in count")
    total = 0.0
    for y, p in zip(labels, probs):
        if len(y.start) != len(p.p_start):
            raise ValueError(f"labels cover {len(y.start)} tokens, predictions {len(p.p_start)}")
        for gold, pred in ((y.start, p.p_start), (y.end, p.p_end)):
            gold = np.asarray(gold, dtype=np.float64)
            pred = np.asarray(pred, dtype=np.float64)
            total -= float(np.sum(gold * _clamped_log(pred) + (1 - gold) * _clamped_log(1 - pred)))
    return total


def sentiment_loss(gold: Sequence[Sentiment], dists: Sequence[np.ndarray]) -> float:
    if len(gold) != len(dists):
        raise ValueError("gold classes and distributions differ in count")
    return float(-sum(_clamped_log(float(d[g.index])) for g, d in zip(gold, dists)))


@dataclass(frozen=True)
class OptimizerConfig:
    head_lr: float = 1e-3
    encoder_lr: float = 1e-5
    weight_decay: float = 0.01
    warmup_fraction: float = 0.1
    batch_size: int = 4
    epochs: int = 40
    seed: int = 0

    def __post_init__(self):
        if self.head_lr < 0 or self.encoder_lr < 0:
            raise ValueError("step sizes must be non-negative")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError(f"warmup_fraction {self.warmup_fraction} outside [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


class AdamW:
    """Adam with decoupled weight decay, per-parameter step sizes."""

    def __init__(self, params: Dict[str, np.ndarray], weight_decay=0.01, betas=(0.9, 0.999), eps=1e-8):
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], lrs: Dict[str, float]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            lr = lrs[k]
            if lr == 0.0:
                continue
            p *= p.dtype.type(1.0 - lr * self.weight_decay)
            p -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


def lr_multiplier(step: int, total_steps: int, warmup_fraction: float) -> float:
    """Linear warmup over the first ``warmup_fraction`` of all steps, then flat."""
    warm = int(math.ceil(warmup_fraction * total_steps))
    if warm and step < warm:
        return (step + 1) / warm
    return 1.0


def build_examples(sentences: Sequence[AnnotatedSentence]) -> List[Example]:
    return [(s, inst) for s in sentences for inst in derive_supervision(s)]


@dataclass
class InferenceParams:
    delta: float = DEFAULT_DELTA
    tau: float = DEFAULT_TAU
    max_span_len: int = DEFAULT_MAX_SPAN_LEN
    direction: str = "both"


def predict_split(model, sentences: Sequence[AnnotatedSentence], inference: InferenceParams):
    return {
        s.id: extract_triplets(model, s, inference.delta, inference.tau, inference.max_span_len, inference.direction)
        for s in sentences
    }


def evaluate_split(model, sentences: Sequence[AnnotatedSentence], inference: InferenceParams) -> Dict[MatchMode, PRF]:
    preds = predict_split(model, sentences, inference)
    return score_all(preds, {s.id: s.triplets for s in sentences})


@dataclass
class EpochRecord:
    epoch: int
    loss: LossBreakdown
    dev: Dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"epoch": self.epoch, **asdict(self.loss), "dev_f1": self.dev}, sort_keys=True)


@dataclass
class FitResult:
    model: BMRCModel
    history: List[EpochRecord]
    best_epoch: int
    best_dev_f1: float


def dataset_loss(model: BMRCModel, examples: Sequence[Example], batch_size: int = 32) -> LossBreakdown:
    l = np.zeros(3)
    for i in range(0, len(examples), batch_size):
        parts, _ = model.loss_and_grads(examples[i : i + batch_size], with_grads=False)
        l += parts
    return total_loss(*map(float, l))


def fit(
    model: BMRCModel,
    train: DatasetSplit,
    dev: DatasetSplit,
    config: OptimizerConfig,
    inference: Optional[InferenceParams] = None,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> FitResult:
    """Train ``model`` in place; return the best-dev snapshot and the history.

    Epoch 0 of the history holds the eval-mode loss at initialisation; each
    later epoch holds the summed training losses seen during that epoch and
    the dev F1 per subtask after it. Best-dev selection uses triplet F1, the
    earliest epoch winning ties.
    """
    inference = inference or InferenceParams()
    examples = build_examples(train.sentences)
    rng = np.random.default_rng(config.seed)
    steps_per_epoch = math.ceil(len(examples) / config.batch_size) if examples else 0
    total_steps = steps_per_epoch * config.epochs
    opt = AdamW(model.params, weight_decay=config.weight_decay)
    base_lr = {k: (config.head_lr if k in HEAD_PARAMS else config.encoder_lr) for k in model.params}

    def dev_scores():
        scores = evaluate_split(model, dev.sentences, inference)
        return {m.value: scores[m].f1 for m in MatchMode}

    history = [EpochRecord(0, dataset_loss(model, examples), dev_scores())]
    if on_epoch:
        on_epoch(history[0])
    best = (history[0].dev[MatchMode.TRIPLET.value], 0, model.copy())

    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(examples))
        sums = np.zeros(3)
        for i in range(0, len(order), config.batch_size):
            chunk = [examples[j] for j in order[i : i + config.batch_size]]
            parts, grads = model.loss_and_grads(chunk, train=True, rng=rng)
            if not all(math.isfinite(x) for x in parts):
                raise TrainingError(f"non-finite loss {parts} at epoch {epoch}, step {step}")
            sums += parts
            mult = lr_multiplier(step, total_steps, config.warmup_fraction)
            opt.step(model.params, grads, {k: lr * mult for k, lr in base_lr.items()})
            step += 1
        record = EpochRecord(epoch, total_loss(*map(float, sums)), dev_scores())
        history.append(record)
        if on_epoch:
            on_epoch(record)
        log.info("epoch %d loss %.4f dev T-F1 %.4f", epoch, record.loss.total, record.dev["T"])
        if record.dev[MatchMode.TRIPLET.value] > best[0]:
            best = (record.dev[MatchMode.TRIPLET.value], epoch, model.copy())
    return FitResult(best[2], history, best[1], best[0])


# ---------------------------------------------------------------------------
# gradient verification


def sample_parameters(model: BMRCModel, examples: Sequence[Example], sample_size: int, seed: int = 0):
    """Pick ``(name, index)`` probes spread over every parameter tensor.

    Embedding tables are sampled only on rows the examples actually touch.
    """
    rng = np.random.default_rng(seed)
    names = sorted(model.params)
    per_tensor = max(1, math.ceil(sample_size / len(names)))
    inputs = [model.vocab[t] for s, inst in examples for t in (*inst.query.text_tokens, *s.tokens)]
    used_rows = {
        "embed.word": np.unique([model.vocab.cls_id, model.vocab.sep_id, *inputs]),
        "embed.position": np.arange(max(len(inst.query) + len(s.tokens) + 2 for s, inst in examples)),
        "embed.segment": np.arange(2),
    }
    probes = []
    for name in names:
        p = model.params[name]
        for _ in range(per_tensor):
            if name in used_rows:
                idx = (int(rng.choice(used_rows[name])), int(rng.integers(p.shape[1])))
            else:
                idx = tuple(int(rng.integers(d)) for d in p.shape)
            probes.append((name, idx))
    return probes


def gradient_check(
    model: BMRCModel,
    examples,
    sample_size: int = 100,
    seed: int = 0,
    step: float = 1e-5,
    floor: float = 1e-6,
    transform: Optional[Callable[[Dict[str, np.ndarray]], None]] = None,
    probes: Optional[Sequence[tuple]] = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs on a float64 copy in eval mode. The error of one probe is
    ``|a - n| / max(|a|, |n|, floor)``. ``transform`` may edit the analytic
    gradients before comparison (used to test that corruption is caught);
    ``probes`` replaces the seeded ``(name, index)`` sample.
    """
    if isinstance(examples, tuple):
        examples = [examples]
    m64 = model.copy(dtype=np.float64)
    _, grads = m64.loss_and_grads(examples)
    if transform is not None:
        transform(grads)

    def f():
        parts, _ = m64.loss_and_grads(examples, with_grads=False)
        return sum(parts)

    worst = 0.0
    if probes is None:
        probes = sample_parameters(m64, examples, sample_size, seed)
    for name, idx in probes:
        p = m64.params[name]
        orig = p[idx]
        p[idx] = orig + step
        up = f()
        p[idx] = orig - step
        down = f()
        p[idx] = orig
        numeric = (up - down) / (2 * step)
        analytic = float(grads[name][idx])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        worst = max(worst, err)
    return worst
