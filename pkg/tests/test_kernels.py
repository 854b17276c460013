import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bmrc import _kernels
from bmrc._kernels import numba_kernels, numpy_kernels

needs_numba = pytest.mark.skipif(numba_kernels is None, reason="numba not importable")


def _rand(shape, dtype, seed=0):
    return np.random.default_rng(seed).normal(size=shape).astype(dtype)


@needs_numba
@pytest.mark.parametrize("dtype, tol", [(np.float64, 1e-12), (np.float32, 1e-5)])
def test_row_kernels_agree(dtype, tol):
    x = _rand((7, 16), dtype)
    dy = _rand((7, 16), dtype, seed=1)
    gain = _rand((16,), dtype, seed=2)
    bias = _rand((16,), dtype, seed=3)

    a = numpy_kernels.layer_norm(x, gain, bias, 1e-5)
    b = numba_kernels.layer_norm(x, gain, bias, 1e-5)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=tol, atol=tol)
    np.testing.assert_allclose(
        numpy_kernels.layer_norm_backward(dy, a[1], a[2], gain),
        numba_kernels.layer_norm_backward(dy, a[1], a[2], gain),
        rtol=tol, atol=tol,
    )
    p = numpy_kernels.softmax(x)
    np.testing.assert_allclose(p, numba_kernels.softmax(x), rtol=tol, atol=tol)
    np.testing.assert_allclose(
        numpy_kernels.softmax_backward(p, dy), numba_kernels.softmax_backward(p, dy), rtol=tol, atol=tol
    )
    np.testing.assert_allclose(numpy_kernels.gelu(x), numba_kernels.gelu(x), rtol=tol, atol=tol)
    np.testing.assert_allclose(
        numpy_kernels.gelu_backward(x, dy), numba_kernels.gelu_backward(x, dy), rtol=tol, atol=tol
    )


@pytest.mark.parametrize("impl", ["numpy", "numba"])
def test_kernel_output_dtype_follows_input(impl):
    k = numpy_kernels if impl == "numpy" else numba_kernels
    if k is None:
        pytest.skip("numba not importable")
    x = _rand((3, 4), np.float32)
    assert k.softmax(x).dtype == np.float32
    assert k.gelu(x).dtype == np.float32
    assert k.layer_norm(x, np.ones(4, np.float32), np.zeros(4, np.float32), 1e-5)[0].dtype == np.float32


def test_layer_norm_rows_are_standardized():
    y, xhat, _ = numpy_kernels.layer_norm(_rand((5, 32), np.float64), np.ones(32), np.zeros(32), 0.0)
    np.testing.assert_allclose(y.mean(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=1), 1, atol=1e-12)


def test_gelu_known_values():
    x = np.array([[0.0, 1.0, -1.0]])
    # tanh form: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
    expected = 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi) * (x + 0.044715 * x**3)))
    np.testing.assert_allclose(numpy_kernels.gelu(x), expected, rtol=0, atol=1e-15)
    assert abs(numpy_kernels.gelu(x)[0, 1] - 0.8411919906) < 1e-9


def test_backward_kernels_match_finite_differences():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 6))
    gain, bias = rng.normal(size=6), rng.normal(size=6)
    dy = rng.normal(size=(3, 6))
    h = 1e-6

    def num_grad(f):
        g = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            xp, xm = x.copy(), x.copy()
            xp[idx] += h
            xm[idx] -= h
            g[idx] = ((f(xp) - f(xm)) * dy).sum() / (2 * h)
        return g

    _, xhat, rstd = numpy_kernels.layer_norm(x, gain, bias, 1e-5)
    np.testing.assert_allclose(
        numpy_kernels.layer_norm_backward(dy, xhat, rstd, gain),
        num_grad(lambda z: numpy_kernels.layer_norm(z, gain, bias, 1e-5)[0]),
        atol=1e-7,
    )
    p = numpy_kernels.softmax(x)
    np.testing.assert_allclose(numpy_kernels.softmax_backward(p, dy), num_grad(numpy_kernels.softmax), atol=1e-8)
    np.testing.assert_allclose(numpy_kernels.gelu_backward(x, dy), num_grad(numpy_kernels.gelu), atol=1e-8)


def _pair_oracle(p_start, p_end, tau, max_len):
    n = len(p_start)
    taken = set()
    out = []
    for s in range(n):
        if p_start[s] <= tau:
            continue
        cands = [e for e in range(s, n) if p_end[e] > tau and e not in taken]
        if cands and cands[0] - s + 1 <= max_len:
            taken.add(cands[0])
            out.append((s, cands[0]))
    return out


probs = st.lists(st.sampled_from([0.1, 0.4, 0.5, 0.6, 0.9]), min_size=1, max_size=15)


@given(probs, probs, st.integers(1, 6))
def test_pair_spans_matches_oracle(ps, pe, max_len):
    n = min(len(ps), len(pe))
    ps, pe = np.array(ps[:n]), np.array(pe[:n])
    want = _pair_oracle(ps, pe, 0.5, max_len)
    impls = [numpy_kernels] + ([numba_kernels] if numba_kernels is not None else [])
    for k in impls:
        s, e = k.pair_spans(ps, pe, 0.5, max_len)
        assert s.dtype == np.int64 and e.dtype == np.int64
        assert list(zip(s.tolist(), e.tolist())) == want


def _backend_in_subprocess(flag):
    env = dict(os.environ)
    env.pop("BMRC_DISABLE_NUMBA", None)
    if flag is not None:
        env["BMRC_DISABLE_NUMBA"] = flag
    out = subprocess.run(
        [sys.executable, "-c", "from bmrc import _kernels; print(_kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    return out.stdout.strip()


@needs_numba
def test_env_flag_selects_backend():
    assert _backend_in_subprocess(None) == "numba"
    assert _backend_in_subprocess("0") == "numba"
    assert _backend_in_subprocess("1") == "numpy"


def test_module_aliases_follow_backend():
    active = numba_kernels if _kernels.USE_NUMBA else numpy_kernels
    assert _kernels.softmax is active.softmax
    assert _kernels.pair_spans is active.pair_spans


@pytest.mark.parametrize("impl", ["numpy", "numba"])
@given(st.lists(st.integers(0, 5), min_size=1, max_size=30))
def test_scatter_add_rows_matches_loop(impl, idx):
    k = numpy_kernels if impl == "numpy" else numba_kernels
    if k is None:
        pytest.skip("numba not importable")
    idx = np.array(idx, dtype=np.int64)
    rows = _rand((len(idx), 3), np.float64)
    want = np.full((6, 3), 0.5)
    for i, t in enumerate(idx):
        want[t] += rows[i]
    got = k.scatter_add_rows(np.full((6, 3), 0.5), idx, rows)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)
