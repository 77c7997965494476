"""Time the stepping kernels across available backends.

Usage:
    python3 benchmarks/bench_kernels.py [--n 20000] [--steps 200] [--repeat 5]

Advances the same trajectory batch through each backend and prints per-step
throughput plus the compiled/python speedup. The batches are regenerated
before every call so the clamp never trips mid-timing.
"""

import argparse
import time

import numpy as np

from weakval_sim import kernels
from weakval_sim.kernels_py import BAYES, EULER, MILSTEIN


def _fresh(n, steps, rng):
    r = rng.uniform(0.05, 0.95, n)
    cre = rng.uniform(-0.3, 0.3, n)
    cim = rng.uniform(-0.3, 0.3, n)
    cap = np.sqrt(r * (1.0 - r))
    scale = np.minimum(1.0, 0.9 * cap / np.hypot(cre, cim))
    normals = rng.standard_normal((steps, n))
    uniforms = rng.uniform(size=(steps, n))
    return r, cre * scale, cim * scale, normals, uniforms


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000, help="trajectories per batch")
    ap.add_argument("--steps", type=int, default=200, help="steps per call")
    ap.add_argument("--repeat", type=int, default=5, help="take the best of N runs")
    args = ap.parse_args()

    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)} (in use: {kernels.backend_name()})")
    print(f"batch: {args.n} trajectories x {args.steps} steps, best of {args.repeat}")
    print()

    gamma, dt = 1.0, 1e-3
    rng = np.random.default_rng(0)
    cases = []
    for code, label in ((EULER, "euler"), (MILSTEIN, "milstein"), (BAYES, "bayes")):
        cases.append((f"evolve_generic/{label}",
                      lambda impl, c=code: impl.evolve_generic(
                          c, *state[:3], gamma, dt, state[3])))
    cases.append(("mc_generic/euler",
                  lambda impl: impl.mc_generic(
                      EULER, *state[:3], gamma, dt, state[3], state[4],
                      np.zeros(args.n))))
    cases.append(("evolve_cqed",
                  lambda impl: impl.evolve_cqed(
                      *state[:3], 0.8, 0.3, 0.55, 1.2, dt, state[3],
                      np.zeros(args.n))))

    width = max(len(name) for name, _ in cases)
    header = f"{'kernel':<{width}}  " + "".join(f"{b:>12}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)

    step_count = args.n * args.steps
    for name, call in cases:
        times = {}
        for bname, impl in backends.items():
            state = _fresh(args.n, args.steps, np.random.default_rng(0))
            times[bname] = _time(lambda: call(impl), args.repeat)
        row = f"{name:<{width}}  "
        row += "".join(f"{step_count / times[b] / 1e6:>10.1f}Ms" for b in backends)
        if "compiled" in times and "python" in times:
            row += f"{times['python'] / times['compiled']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
