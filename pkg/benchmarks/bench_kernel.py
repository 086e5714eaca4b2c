"""Compare the compiled and pure-numpy round kernels.

    python benchmarks/bench_kernel.py [--repeat 5]

Times ``simulate_chunk`` on pre-mapped features (the feature map is shared
and excluded) for a full-scale chunk and a small analysis-scale chunk, then
checks that both backends produce the same models.
"""
import argparse
import time

import numpy as np

from psofed import kernel
from psofed.algorithms import selection_schedule
from psofed.masks import init_masks

CASES = {
    # name: (K, D, M, rounds, selected)
    "full-scale": (100, 200, 40, 200, 4),
    "analysis-scale": (10, 16, 8, 2000, 4),
}


def make_case(K, D, M, rounds, selected, seed=0):
    rng = np.random.default_rng(seed)
    Z = np.sqrt(2.0 / D) * np.cos(rng.uniform(0, 2 * np.pi, size=(rounds, K, D)))
    Y = rng.normal(size=(rounds, K))
    sel = selection_schedule(seed, 0, rounds, K, selected)
    offsets = np.array([m.offset for m in init_masks("uncoordinated", D, M, M, K, seed)], dtype=np.int64)
    G = np.eye(D) / D
    return Z, Y, sel, offsets, G, np.zeros(D), 1.0


def time_backend(name, case, M, repeat):
    Z, Y, sel, offsets, G, gb, gc = case
    K, D = Z.shape[1:]
    best = np.inf
    for _ in range(repeat):
        W, w = np.zeros((K, D)), np.zeros(D)
        mse = np.empty(len(Z))
        t0 = time.perf_counter()
        kernel.simulate_chunk(W, w, Z, Y, sel, offsets, 0, M, M, 0.75, True, G, gb, gc, mse, backend=name)
        best = min(best, time.perf_counter() - t0)
    return best, w


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    names = sorted(kernel.BACKENDS)
    if "cython" not in names:
        print("compiled backend not built; timing the python backend only")
    print(f"{'case':<16}{'backend':<10}{'best [s]':>10}{'rounds/s':>12}")
    for label, (K, D, M, rounds, selected) in CASES.items():
        case = make_case(K, D, M, rounds, selected)
        times, models = {}, {}
        for name in names:
            times[name], models[name] = time_backend(name, case, M, args.repeat)
            print(f"{label:<16}{name:<10}{times[name]:>10.4f}{rounds / times[name]:>12.0f}")
        if len(names) == 2:
            diff = float(np.max(np.abs(models["cython"] - models["python"])))
            print(f"{label:<16}speedup {times['python'] / times['cython']:.1f}x, max |dw| = {diff:.2g}")


if __name__ == "__main__":
    main()
