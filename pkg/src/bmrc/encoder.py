"""A small trainable transformer encoder over ``[CLS] query [SEP] sentence``.

Forward passes return a cache that the matching ``*_backward`` function
consumes; gradients are exact (no autograd framework). Arrays are batched as
``(batch, length, width)`` with right padding and a key mask.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Sequence

import numpy as np

from . import _kernels as K
from .corpus import AnnotatedSentence
from .queries import TEMPLATE_WORDS, Query

Params = Dict[str, np.ndarray]

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
RESERVED = (PAD, UNK, CLS, SEP)
LN_EPS = 1e-5
MASK_VALUE = -1e9


class EncoderError(RuntimeError):
    pass


class InputTooLong(ValueError):
    pass


class Vocabulary:
    """Word-level vocabulary; lookups are lower-cased."""

    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[: len(RESERVED)]) != RESERVED:
            raise ValueError(f"vocabulary must start with {RESERVED}")
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate vocabulary entries")

    pad_id = 0
    unk_id = 1
    cls_id = 2
    sep_id = 3

    @classmethod
    def build(cls, sentences: Iterable[AnnotatedSentence]) -> "Vocabulary":
        words = set(TEMPLATE_WORDS)
        for s in sentences:
            words.update(t.lower() for t in s.tokens)
        words -= set(RESERVED)
        return cls(list(RESERVED) + sorted(words))

    def __len__(self) -> int:
        return len(self.tokens)

    def __getitem__(self, token: str) -> int:
        return self.index.get(token.lower(), self.unk_id)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for t in self.tokens:
                f.write(t + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            return cls([line.rstrip("\n") for line in f if line.strip()])


@dataclass(frozen=True)
class EncoderConfig:
    d_h: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_len: int = 128
    dropout_rate: float = 0.1

    def __post_init__(self):
        if self.d_h <= 0 or self.n_heads <= 0 or self.d_h % self.n_heads:
            raise ValueError(f"d_h={self.d_h} must be a positive multiple of n_heads={self.n_heads}")
        if self.n_layers < 1 or self.d_ff < 1 or self.max_len < 4:
            raise ValueError("n_layers, d_ff must be >= 1 and max_len >= 4")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate {self.dropout_rate} outside [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CombinedInput:
    ids: np.ndarray
    segment: np.ndarray
    query_len: int

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def sentence_len(self) -> int:
        return len(self.ids) - self.query_len - 2


def build_combined_input(
    query: Query, sentence: AnnotatedSentence, vocab: Vocabulary, max_len: int
) -> CombinedInput:
    q = len(query.text_tokens)
    n = len(sentence.tokens)
    total = q + n + 2
    if total > max_len:
        raise InputTooLong(f"sentence {sentence.id}: combined length {total} exceeds max_len {max_len}")
    ids = np.empty(total, dtype=np.int64)
    ids[0] = vocab.cls_id
    ids[1 : q + 1] = [vocab[t] for t in query.text_tokens]
    ids[q + 1] = vocab.sep_id
    ids[q + 2 :] = [vocab[t] for t in sentence.tokens]
    segment = np.zeros(total, dtype=np.int64)
    segment[q + 2 :] = 1
    return CombinedInput(ids, segment, q)


@dataclass
class Batch:
    ids: np.ndarray  # (B, L)
    segment: np.ndarray  # (B, L)
    mask: np.ndarray  # (B, L) bool, True on real tokens
    query_len: np.ndarray  # (B,)
    sentence_len: np.ndarray  # (B,)

    @classmethod
    def collate(cls, inputs: Sequence[CombinedInput], pad_id: int = 0) -> "Batch":
        L = max(len(x) for x in inputs)
        B = len(inputs)
        ids = np.full((B, L), pad_id, dtype=np.int64)
        seg = np.zeros((B, L), dtype=np.int64)
        mask = np.zeros((B, L), dtype=bool)
        for b, x in enumerate(inputs):
            ids[b, : len(x)] = x.ids
            seg[b, : len(x)] = x.segment
            mask[b, : len(x)] = True
        return cls(
            ids,
            seg,
            mask,
            np.array([x.query_len for x in inputs], dtype=np.int64),
            np.array([x.sentence_len for x in inputs], dtype=np.int64),
        )

    def __len__(self) -> int:
        return self.ids.shape[0]


# ---------------------------------------------------------------------------
# parameters


def init_encoder_params(config: EncoderConfig, vocab_size: int, rng: np.random.Generator, dtype=np.float32) -> Params:
    d, f = config.d_h, config.d_ff

    def w(*shape):
        return (rng.standard_normal(shape) * 0.02).astype(dtype)

    def zeros(*shape):
        return np.zeros(shape, dtype=dtype)

    p: Params = {
        "embed.word": w(vocab_size, d),
        "embed.position": w(config.max_len, d),
        "embed.segment": w(2, d),
    }
    for l in range(config.n_layers):
        pre = f"layer{l}."
        for name in ("q", "k", "v", "o"):
            p[pre + f"attn.w{name}"] = w(d, d)
            # a key bias shifts every score in a row equally, so it is omitted
            if name != "k":
                p[pre + f"attn.b{name}"] = zeros(d)
        p[pre + "ln1.gain"] = np.ones(d, dtype=dtype)
        p[pre + "ln1.bias"] = zeros(d)
        p[pre + "ffn.w1"] = w(d, f)
        p[pre + "ffn.b1"] = zeros(f)
        p[pre + "ffn.w2"] = w(f, d)
        p[pre + "ffn.b2"] = zeros(d)
        p[pre + "ln2.gain"] = np.ones(d, dtype=dtype)
        p[pre + "ln2.bias"] = zeros(d)
    return p


# ---------------------------------------------------------------------------
# embedding


def embed(batch: Batch, params: Params) -> np.ndarray:
    """Sum of word, position and segment embedding lookups, shape (B, L, d)."""
    word, pos, seg = params["embed.word"], params["embed.position"], params["embed.segment"]
    L = batch.ids.shape[1]
    if batch.ids.max(initial=0) >= word.shape[0] or batch.ids.min(initial=0) < 0:
        raise EncoderError(f"token id out of range for a {word.shape[0]}-row word table")
    if L > pos.shape[0]:
        raise EncoderError(f"length {L} exceeds the {pos.shape[0]}-row position table")
    return word[batch.ids] + pos[None, :L] + seg[batch.segment]


def embed_backward(batch: Batch, params: Params, dE: np.ndarray, grads: Params) -> None:
    L = batch.ids.shape[1]
    dword = np.zeros_like(params["embed.word"])
    rows = np.ascontiguousarray(dE.reshape(-1, dE.shape[-1]))
    K.scatter_add_rows(dword, batch.ids.ravel(), rows)
    dpos = np.zeros_like(params["embed.position"])
    dpos[:L] = dE.sum(axis=0)
    dseg = np.zeros_like(params["embed.segment"])
    K.scatter_add_rows(dseg, batch.segment.ravel(), rows)
    grads["embed.word"] = dword
    grads["embed.position"] = dpos
    grads["embed.segment"] = dseg


# ---------------------------------------------------------------------------
# transformer blocks


def _ln(x, gain, bias):
    shape = x.shape
    y, xhat, rstd = K.layer_norm(np.ascontiguousarray(x.reshape(-1, shape[-1])), gain, bias, LN_EPS)
    return y.reshape(shape), (xhat, rstd)


def _ln_backward(dy, cache, gain):
    xhat, rstd = cache
    d2 = np.ascontiguousarray(dy.reshape(-1, dy.shape[-1]))
    dx = K.layer_norm_backward(d2, xhat, rstd, gain)
    return dx.reshape(dy.shape), (d2 * xhat).sum(axis=0), d2.sum(axis=0)


def _dropout_mask(shape, rate, rng, dtype):
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / dtype(1.0 - rate)


def _split_heads(x, h):
    B, L, d = x.shape
    return x.reshape(B, L, h, d // h).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, h, L, dk = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, L, h * dk)


def block_forward(x, mask, params: Params, layer: int, config: EncoderConfig, train: bool, rng):
    pre = f"layer{layer}."
    P = lambda n: params[pre + n]  # noqa: E731
    B, L, d = x.shape
    h = config.n_heads
    dk = d // h
    scale = 1.0 / math.sqrt(dk)
    dtype = x.dtype.type

    q = _split_heads(x @ P("attn.wq") + P("attn.bq"), h)
    k = _split_heads(x @ P("attn.wk"), h)
    v = _split_heads(x @ P("attn.wv") + P("attn.bv"), h)
    scores = (q @ k.transpose(0, 1, 3, 2)) * dtype(scale)
    scores = scores + np.where(mask, 0.0, MASK_VALUE).astype(x.dtype)[:, None, None, :]
    attn = K.softmax(np.ascontiguousarray(scores.reshape(-1, L))).reshape(B, h, L, L)
    rate = config.dropout_rate
    attn_mask = _dropout_mask(attn.shape, rate, rng, dtype) if train and rate > 0 else None
    attn_d = attn * attn_mask if attn_mask is not None else attn
    ctx = _merge_heads(attn_d @ v)
    o = ctx @ P("attn.wo") + P("attn.bo")
    y1, ln1 = _ln(x + o, P("ln1.gain"), P("ln1.bias"))

    u = y1 @ P("ffn.w1") + P("ffn.b1")
    g = K.gelu(u)
    f = g @ P("ffn.w2") + P("ffn.b2")
    ffn_mask = _dropout_mask(f.shape, rate, rng, dtype) if train and rate > 0 else None
    if ffn_mask is not None:
        f = f * ffn_mask
    y2, ln2 = _ln(y1 + f, P("ln2.gain"), P("ln2.bias"))
    if not np.isfinite(y2).all():
        raise EncoderError(f"non-finite activations in block {layer}")
    cache = dict(x=x, q=q, k=k, v=v, attn=attn, attn_mask=attn_mask, attn_d=attn_d, ctx=ctx,
                 ln1=ln1, y1=y1, u=u, g=g, ffn_mask=ffn_mask, ln2=ln2, scale=scale)
    return y2, cache


def block_backward(dy2, cache, params: Params, layer: int, config: EncoderConfig, grads: Params):
    pre = f"layer{layer}."
    P = lambda n: params[pre + n]  # noqa: E731
    c = cache
    B, L, d = dy2.shape

    dr2, grads[pre + "ln2.gain"], grads[pre + "ln2.bias"] = _ln_backward(dy2, c["ln2"], P("ln2.gain"))
    df = dr2 * c["ffn_mask"] if c["ffn_mask"] is not None else dr2
    g2 = c["g"].reshape(-1, c["g"].shape[-1])
    df2 = df.reshape(-1, d)
    grads[pre + "ffn.w2"] = g2.T @ df2
    grads[pre + "ffn.b2"] = df2.sum(axis=0)
    du = K.gelu_backward(c["u"], df @ P("ffn.w2").T)
    du2 = du.reshape(-1, du.shape[-1])
    grads[pre + "ffn.w1"] = c["y1"].reshape(-1, d).T @ du2
    grads[pre + "ffn.b1"] = du2.sum(axis=0)
    dy1 = dr2 + du @ P("ffn.w1").T

    dr1, grads[pre + "ln1.gain"], grads[pre + "ln1.bias"] = _ln_backward(dy1, c["ln1"], P("ln1.gain"))
    dx = dr1.copy()
    do2 = dr1.reshape(-1, d)
    grads[pre + "attn.wo"] = c["ctx"].reshape(-1, d).T @ do2
    grads[pre + "attn.bo"] = do2.sum(axis=0)
    dctx = _split_heads(dr1 @ P("attn.wo").T, config.n_heads)
    dattn_d = dctx @ c["v"].transpose(0, 1, 3, 2)
    dv = c["attn_d"].transpose(0, 1, 3, 2) @ dctx
    dattn = dattn_d * c["attn_mask"] if c["attn_mask"] is not None else dattn_d
    attn = c["attn"]
    dscores = K.softmax_backward(
        np.ascontiguousarray(attn.reshape(-1, L)), np.ascontiguousarray(dattn.reshape(-1, L))
    ).reshape(attn.shape) * attn.dtype.type(c["scale"])
    dq = dscores @ c["k"]
    dk = dscores.transpose(0, 1, 3, 2) @ c["q"]

    x2 = c["x"].reshape(-1, d)
    for name, dh in (("q", dq), ("k", dk), ("v", dv)):
        dm = _merge_heads(dh)
        dm2 = dm.reshape(-1, d)
        grads[pre + f"attn.w{name}"] = x2.T @ dm2
        if name != "k":
            grads[pre + f"attn.b{name}"] = dm2.sum(axis=0)
        dx += dm @ P(f"attn.w{name}").T
    return dx


def encode(E: np.ndarray, mask: np.ndarray, params: Params, config: EncoderConfig, train: bool = False, rng=None):
    """Run the stacked blocks; returns ``(H, caches)``.

    Dropout is active only when ``train`` is true, and then needs ``rng``.
    """
    if not np.isfinite(E).all():
        raise EncoderError("non-finite input embeddings")
    if train and config.dropout_rate > 0 and rng is None:
        raise ValueError("train mode with dropout needs an rng")
    caches = []
    x = E
    for layer in range(config.n_layers):
        x, cache = block_forward(x, mask, params, layer, config, train, rng)
        caches.append(cache)
    return x, caches


def encode_backward(dH: np.ndarray, caches: List[dict], params: Params, config: EncoderConfig, grads: Params) -> np.ndarray:
    dx = dH
    for layer in reversed(range(config.n_layers)):
        dx = block_backward(dx, caches[layer], params, layer, config, grads)
    return dx


def attention_weights(caches: List[dict]) -> List[np.ndarray]:
    """Per-layer attention probabilities, each (B, heads, L, L)."""
    return [c["attn"] for c in caches]
