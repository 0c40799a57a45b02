"""Timings for the compiled kernels against the pure-Python ones.

Drives both kernel modules directly on the hot paths (matmul, softmax,
row norms, Jacobi sweeps, Adam) and then times a full training step through
whichever backend the package selected at import. Run with:

    python3 benchmarks/bench_backends.py
"""

import random
import time

from precond_attn import _kernels_py
from precond_attn.backend import BACKEND
from precond_attn.config import ExperimentConfig
from precond_attn.harness import run_training

try:
    from precond_attn import _kernels_c
except ImportError:
    _kernels_c = None


def rand_array(rng, n):
    from array import array
    return array("d", [rng.uniform(-1.0, 1.0) for _ in range(n)])


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(rng):
    n, d = 64, 64
    a = rand_array(rng, n * d)
    b = rand_array(rng, d * n)
    from array import array
    g = rand_array(rng, n * d)
    m = rand_array(rng, n * d)
    v = array("d", [x * x for x in g])  # second moments are non-negative
    gram = rand_array(rng, 12 * 12)
    return [
        ("matmul 64x64 @ 64x64", lambda K: K.matmul(a, n, d, b, n), 20),
        ("softmax_rows 64x64", lambda K: K.softmax_rows(a, n, d), 50),
        ("row_norms 64x64", lambda K: K.row_norms(a, n, d), 200),
        ("layer_norm_rows 64x64",
         lambda K: K.layer_norm_rows(a, n, d, rand_array(rng, d),
                                     rand_array(rng, d), 1e-5), 20),
        ("jacobi_sweeps 12x12",
         lambda K: K.jacobi_sweeps(gram[:], 12, 12, 1e-12, 100), 50),
        ("adam_update 4096 params",
         lambda K: K.adam_update(a[:], g, m[:], v[:], 1e-3, 0.9, 0.999,
                                 1e-8, 0.0, 1.0, 1.0), 50),
    ]


def training_step_seconds():
    cfg = ExperimentConfig(task="majority", n=9, vocab=4, d_model=32,
                           head_count=4, layer_count=2, d_ff=64,
                           mode="precond_weights", steps=20, batch_size=4,
                           eval_every=20, eval_size=4, instrument_every=0,
                           seed=0, out_dir="/tmp/bench_run")
    t0 = time.perf_counter()
    run_training(cfg)
    return (time.perf_counter() - t0) / cfg.steps


def main():
    rng = random.Random(0)
    print(f"selected backend: {BACKEND}")
    if _kernels_c is None:
        print("compiled extension not built; timing the pure backend only")
    rows = []
    for name, call, repeats in kernel_cases(rng):
        pure = time_call(lambda: call(_kernels_py), repeats)
        if _kernels_c is not None:
            comp = time_call(lambda: call(_kernels_c), repeats)
            rows.append((name, pure, comp, pure / comp))
        else:
            rows.append((name, pure, None, None))
    width = max(len(r[0]) for r in rows)
    header = f"{'kernel':<{width}}  {'pure (ms)':>10}  {'compiled (ms)':>13}  {'speedup':>7}"
    print(header)
    print("-" * len(header))
    for name, pure, comp, speedup in rows:
        if comp is None:
            print(f"{name:<{width}}  {1e3 * pure:>10.3f}  {'-':>13}  {'-':>7}")
        else:
            print(f"{name:<{width}}  {1e3 * pure:>10.3f}  {1e3 * comp:>13.3f}  "
                  f"{speedup:>6.1f}x")
    step = training_step_seconds()
    print(f"\nfull training step (D=32, h=4, 2 layers, preconditioned, "
          f"{BACKEND} backend): {1e3 * step:.1f} ms")


if __name__ == "__main__":
    main()
