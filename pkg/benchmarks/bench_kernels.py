"""Timing comparison of the kernel lanes.

Runs every hot kernel on both the numpy reference lane and the compiled
lane (when built), checks they agree pointwise first, and prints a table
of per-call times with the speedup. Usage:

    python benchmarks/bench_kernels.py [--sizes 1000,100000] [--repeats 7]
"""

import argparse
import time

import numpy as np

from pdfflow import kernels

KERNELS = ("envelope", "velocity_gaussian", "reciprocal_factor",
           "initial_density")


def probe_batch(n, seed=2024):
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    pts = gen.uniform(-3.2, 3.2, (n, 3))
    # force a slice of the batch into the reciprocal support so that lane
    # differences there cannot hide
    k = max(1, n // 4)
    pts[:k] = gen.uniform(0.3, 0.9, (k, 3))
    return pts


def call(module, name, pts):
    if name == "initial_density":
        return module.initial_density(pts, pts[::-1].copy())
    return getattr(module, name)(pts)


def best_time(module, name, pts, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        call(module, name, pts)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--sizes", default="1000,100000",
                        help="comma separated batch sizes")
    parser.add_argument("--repeats", type=int, default=7,
                        help="timing repetitions; the best run counts")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    lanes = kernels.lanes()
    if "compiled" not in lanes:
        print("compiled lane not built; timing the reference lane only")
    print(f"active lane for package calls: {kernels.backend_name()}")

    for n in sizes:
        pts = probe_batch(n)
        for name in KERNELS:
            outs = {lane: np.asarray(call(mod, name, pts), dtype=float)
                    for lane, mod in lanes.items()}
            if len(outs) == 2:
                gap = float(np.max(np.abs(outs["reference"]
                                          - outs["compiled"])))
                assert gap <= 1e-13, f"{name}: lanes disagree by {gap:.1e}"
            row = [f"{name:>18s}  n={n:<8d}"]
            times = {lane: best_time(mod, name, pts, args.repeats)
                     for lane, mod in lanes.items()}
            for lane in ("reference", "compiled"):
                if lane in times:
                    row.append(f"{lane} {times[lane] * 1e6:9.1f} us")
            if len(times) == 2:
                row.append(f"speedup {times['reference'] / times['compiled']:5.2f}x")
            print("  ".join(row))


if __name__ == "__main__":
    main()
