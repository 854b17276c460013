"""Compare the numba kernels with their numpy twins.

Per-kernel timings run in-process (both implementations are importable).
The end-to-end training step runs in two subprocesses, one with
BMRC_DISABLE_NUMBA=1, because the backend is chosen at import time.

    python benchmarks/bench_kernels.py [--repeat 20] [--steps 30]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from bmrc._kernels import numba_kernels, numpy_kernels

# shapes of the default toy encoder on a batch of 4 (L ~ 32, d 64, 4 heads, d_ff 256)
B, L, D, H, F = 4, 32, 64, 4, 256


def kernel_cases(rng, dtype):
    def randn(*shape):
        return rng.standard_normal(shape).astype(dtype)

    x, dy = randn(B * L, D), randn(B * L, D)
    gain, bias = np.ones(D, dtype), np.zeros(D, dtype)
    scores = randn(B * H * L, L)
    u, du = randn(B * L, F), randn(B * L, F)
    p_start = rng.random(40)
    p_end = rng.random(40)
    idx = rng.integers(0, 500, B * L)
    table = np.zeros((500, D), dtype)

    def cases(k):
        _, xhat, rstd = k.layer_norm(x, gain, bias, 1e-5)
        p = k.softmax(scores)
        return {
            "layer_norm": lambda: k.layer_norm(x, gain, bias, 1e-5),
            "layer_norm_backward": lambda: k.layer_norm_backward(dy, xhat, rstd, gain),
            "softmax": lambda: k.softmax(scores),
            "softmax_backward": lambda: k.softmax_backward(p, scores),
            "gelu": lambda: k.gelu(u),
            "gelu_backward": lambda: k.gelu_backward(u, du),
            "pair_spans": lambda: k.pair_spans(p_start, p_end, 0.5, 8),
            "scatter_add_rows": lambda: k.scatter_add_rows(table, idx, x),
        }

    return cases


def best_of(fn, repeat, number):
    fn()  # warm-up (triggers compilation for numba)
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


STEP_SCRIPT = """
import sys, time
import numpy as np
from bmrc import _kernels
from bmrc.corpus import synthetic_corpus
from bmrc.encoder import EncoderConfig, Vocabulary
from bmrc.model import BMRCModel
from bmrc.training import AdamW, build_examples

steps = int(sys.argv[1])
sents = synthetic_corpus(20, seed=0)
model = BMRCModel(EncoderConfig(), Vocabulary.build(sents), seed=0)
examples = build_examples(sents)
opt = AdamW(model.params)
lrs = {k: 1e-3 for k in model.params}
rng = np.random.default_rng(0)

def step(i):
    batch = [examples[(4 * i + j) % len(examples)] for j in range(4)]
    _, grads = model.loss_and_grads(batch, train=True, rng=rng)
    opt.step(model.params, grads, lrs)

step(0)
t = time.perf_counter()
for i in range(steps):
    step(i + 1)
print(_kernels.BACKEND, (time.perf_counter() - t) / steps)
"""


def training_step(disable_numba, steps):
    env = dict(os.environ, BMRC_DISABLE_NUMBA="1" if disable_numba else "0")
    out = subprocess.run([sys.executable, "-c", STEP_SCRIPT, str(steps)], env=env,
                         capture_output=True, text=True, check=True)
    backend, seconds = out.stdout.split()
    return backend, float(seconds)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--number", type=int, default=50)
    parser.add_argument("--steps", type=int, default=30, help="training steps per backend")
    args = parser.parse_args()

    if numba_kernels is None:
        sys.exit("numba is not importable; nothing to compare")

    for dtype in (np.float32, np.float64):
        cases = kernel_cases(np.random.default_rng(0), dtype)
        np_cases, nb_cases = cases(numpy_kernels), cases(numba_kernels)
        print(f"{np.dtype(dtype).name:<22}{'numpy us':>12}{'numba us':>12}{'speedup':>10}")
        for name in np_cases:
            if getattr(numpy_kernels, name) is getattr(numba_kernels, name):
                print(f"{name:<22}{'(numpy implementation in both)':>34}")
                continue
            t_np = best_of(np_cases[name], args.repeat, args.number)
            t_nb = best_of(nb_cases[name], args.repeat, args.number)
            print(f"{name:<22}{t_np * 1e6:>12.1f}{t_nb * 1e6:>12.1f}{t_np / t_nb:>9.2f}x")
        print()

    results = {}
    for disable in (True, False):
        backend, sec = training_step(disable, args.steps)
        results[backend] = sec
        print(f"training step ({backend}, batch 4, default encoder): {sec * 1e3:.2f} ms")
    print(f"training step speedup: {results['numpy'] / results['numba']:.2f}x")


if __name__ == "__main__":
    main()
