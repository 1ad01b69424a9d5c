"""Compare the numpy and compiled kernels.

    python benchmarks/bench_kernels.py [--repeat 200] [--json out.json]

Three workloads: the attention kernel at the default latent size with and
without memory tokens, one predictor branch, and a full T=50 generation with
memory. Reports the median wall time per call and the compiled/python ratio.
"""
import argparse
import json
import statistics
import time

import numpy as np

from visinstruct.diffusion import AVAILABLE_KERNELS, AttentionBlock, generate, get_kernel
from visinstruct.runtime import DiffusionRuntime


def timeit(fn, repeat):
    fn()  # warm-up
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def workloads(kernel, rt, rng):
    k = get_kernel(kernel)
    C = rt.predictor.channels
    N = rt.predictor.n_tokens
    block = AttentionBlock.from_seed(C, 0)
    p = rng.standard_normal((N, C))
    mem = rng.standard_normal((N // 2, C))
    kv = np.vstack([p, mem])
    pred = rt.predictor.with_kernel(kernel)
    x = rng.standard_normal((N, C))
    cond = rt.condition("Whisk the eggs with a pinch of salt.")
    _, trace = generate(cond, None, 3, rt.sched, pred)

    def branch():
        pred.predict(x, 25, rt.sched, cond, mem)

    return {
        "attention (no memory)": lambda: k.attention(p, p, block.wq, block.wk, block.wv),
        "attention (+N/2 memory)": lambda: k.attention(p, kv, block.wq, block.wk, block.wv),
        "predictor branch": branch,
        "generate T=50 with memory": lambda: generate(cond, trace, 4, rt.sched, pred),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args(argv)

    rt = DiffusionRuntime.create()
    kernels = sorted(AVAILABLE_KERNELS)
    if "compiled" not in kernels:
        print("compiled kernel not built; timing the numpy kernel only")
    results = {}
    for kernel in kernels:
        for name, fn in workloads(kernel, rt, np.random.default_rng(0)).items():
            reps = max(5, args.repeat // 20) if name.startswith("generate") else args.repeat
            results.setdefault(name, {})[kernel] = timeit(fn, reps)

    print(f"N={rt.predictor.n_tokens} tokens, C={rt.predictor.channels} channels, T={rt.sched.T}")
    print(f"{'workload':<28}" + "".join(f"{k:>14}" for k in kernels) + ("   speedup" if len(kernels) > 1 else ""))
    for name, row in results.items():
        line = f"{name:<28}" + "".join(f"{row[k] * 1e6:>12.1f}us" for k in kernels)
        if len(kernels) > 1:
            line += f"   {row['python'] / row['compiled']:>6.2f}x"
        print(line)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
