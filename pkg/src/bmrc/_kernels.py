"""Row-wise numeric kernels used by the encoder and span decoder.

Two namespaces share one set of signatures: :data:`numpy_kernels` and
:data:`numba_kernels`. The numba one is used when numba imports and the
environment variable ``BMRC_DISABLE_NUMBA`` is unset (or ``0``).

Softmax and GELU forward/backward are elementwise transcendentals that
numpy runs through SIMD exp/tanh; compiled scalar loops measured 1.4-4x
slower, so the numba namespace reuses the numpy versions for those three.

All 2-D kernels operate on the last axis of a ``(rows, width)`` array.
"""

from __future__ import annotations

import math
import os
from types import SimpleNamespace

import numpy as np

GELU_C = math.sqrt(2.0 / math.pi)
GELU_A = 0.044715


# ---------------------------------------------------------------------------
# numpy


def _np_layer_norm(x, gain, bias, eps):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return xhat * gain + bias, xhat, rstd[:, 0]


def _np_layer_norm_backward(dy, xhat, rstd, gain):
    g = dy * gain
    m1 = g.mean(axis=-1, keepdims=True)
    m2 = (g * xhat).mean(axis=-1, keepdims=True)
    return (g - m1 - xhat * m2) * rstd[:, None]


def _np_softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _np_softmax_backward(p, dp):
    return p * (dp - (dp * p).sum(axis=-1, keepdims=True))


def _np_gelu(x):
    return 0.5 * x * (1.0 + np.tanh(GELU_C * (x + GELU_A * x * x * x)))


def _np_gelu_backward(x, dy):
    t = np.tanh(GELU_C * (x + GELU_A * x * x * x))
    d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
    return dy * d


def _np_pair_spans(p_start, p_end, tau, max_len):
    starts = np.flatnonzero(p_start > tau)
    ends = np.flatnonzero(p_end > tau)
    used = np.zeros(len(ends), dtype=bool)
    out_s, out_e = [], []
    for s in starts:
        # first unconsumed end at or after s
        k = np.searchsorted(ends, s)
        while k < len(ends) and used[k]:
            k += 1
        if k < len(ends) and ends[k] - s < max_len:
            used[k] = True
            out_s.append(s)
            out_e.append(ends[k])
    return np.asarray(out_s, dtype=np.int64), np.asarray(out_e, dtype=np.int64)


def _np_scatter_add_rows(table, idx, rows):
    # np.add.at is unbuffered and slow; sort, then sum each run of equal indices
    order = np.argsort(idx, kind="stable")
    uniq, first = np.unique(idx[order], return_index=True)
    table[uniq] += np.add.reduceat(rows[order], first, axis=0)
    return table


numpy_kernels = SimpleNamespace(
    layer_norm=_np_layer_norm,
    layer_norm_backward=_np_layer_norm_backward,
    softmax=_np_softmax,
    softmax_backward=_np_softmax_backward,
    gelu=_np_gelu,
    gelu_backward=_np_gelu_backward,
    pair_spans=_np_pair_spans,
    scatter_add_rows=_np_scatter_add_rows,
)


# ---------------------------------------------------------------------------
# numba

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _build_numba_kernels():
    njit = numba.njit(cache=True, nogil=True)

    @njit
    def layer_norm(x, gain, bias, eps):
        rows, width = x.shape
        y = np.empty_like(x)
        xhat = np.empty_like(x)
        rstd = np.empty(rows, dtype=x.dtype)
        for r in range(rows):
            mu = 0.0
            for j in range(width):
                mu += x[r, j]
            mu /= width
            var = 0.0
            for j in range(width):
                d = x[r, j] - mu
                var += d * d
            var /= width
            rs = 1.0 / math.sqrt(var + eps)
            rstd[r] = rs
            for j in range(width):
                h = (x[r, j] - mu) * rs
                xhat[r, j] = h
                y[r, j] = h * gain[j] + bias[j]
        return y, xhat, rstd

    @njit
    def layer_norm_backward(dy, xhat, rstd, gain):
        rows, width = dy.shape
        dx = np.empty_like(dy)
        for r in range(rows):
            m1 = 0.0
            m2 = 0.0
            for j in range(width):
                g = dy[r, j] * gain[j]
                m1 += g
                m2 += g * xhat[r, j]
            m1 /= width
            m2 /= width
            for j in range(width):
                dx[r, j] = (dy[r, j] * gain[j] - m1 - xhat[r, j] * m2) * rstd[r]
        return dx

    @njit
    def softmax_backward(p, dp):
        rows, width = p.shape
        dx = np.empty_like(p)
        for r in range(rows):
            s = 0.0
            for j in range(width):
                s += dp[r, j] * p[r, j]
            for j in range(width):
                dx[r, j] = p[r, j] * (dp[r, j] - s)
        return dx

    @njit
    def pair_spans(p_start, p_end, tau, max_len):
        n = p_start.shape[0]
        used = np.zeros(n, dtype=np.bool_)
        out_s = np.empty(n, dtype=np.int64)
        out_e = np.empty(n, dtype=np.int64)
        k = 0
        for s in range(n):
            if not p_start[s] > tau:
                continue
            for e in range(s, n):
                if p_end[e] > tau and not used[e]:
                    if e - s < max_len:
                        used[e] = True
                        out_s[k] = s
                        out_e[k] = e
                        k += 1
                    break
        return out_s[:k], out_e[:k]

    @njit
    def scatter_add_rows(table, idx, rows):
        width = rows.shape[1]
        for i in range(idx.shape[0]):
            t = idx[i]
            for j in range(width):
                table[t, j] += rows[i, j]
        return table

    return SimpleNamespace(
        layer_norm=layer_norm,
        layer_norm_backward=layer_norm_backward,
        softmax=_np_softmax,
        softmax_backward=softmax_backward,
        gelu=_np_gelu,
        gelu_backward=_np_gelu_backward,
        pair_spans=pair_spans,
        scatter_add_rows=scatter_add_rows,
    )


numba_kernels = _build_numba_kernels() if numba is not None else None

USE_NUMBA = numba_kernels is not None and os.environ.get("BMRC_DISABLE_NUMBA", "0") in ("", "0")

_active = numba_kernels if USE_NUMBA else numpy_kernels
BACKEND = "numba" if USE_NUMBA else "numpy"

layer_norm = _active.layer_norm
layer_norm_backward = _active.layer_norm_backward
softmax = _active.softmax
softmax_backward = _active.softmax_backward
gelu = _active.gelu
gelu_backward = _active.gelu_backward
pair_spans = _active.pair_spans
scatter_add_rows = _active.scatter_add_rows
