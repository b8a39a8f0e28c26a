"""Time the compiled and numpy path kernels on the same Monte Carlo runs.

    python benchmarks/bench_kernels.py [--paths 2000] [--repeat 3]

Also checks that both backends return identical aggregates.
"""
import argparse
import time

from rankcollide import FiniteSystemSpec
from rankcollide._backend import KERNELS
from rankcollide.simulate import SimConfig, monte_carlo, result_to_csv

CASES = {
    "N=3": FiniteSystemSpec(3, (1.0, 0.0, -1.0), (2.0, 1.0, 1.0), (0.0, 0.0, 0.0)),
    "N=10": FiniteSystemSpec(10, (0.0,) * 10, tuple(1.0 + 0.1 * k for k in range(10)),
                             tuple(0.1 * k for k in range(10))),
    "N=40": FiniteSystemSpec(40, (0.0,) * 40, (1.0,) * 40, tuple(0.05 * k for k in range(40))),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    backends = sorted(KERNELS)
    print(f"backends available: {', '.join(backends)}")
    print(f"{'case':<6} " + " ".join(f"{b:>10}" for b in backends) + "   speedup  identical")
    for name, spec in CASES.items():
        times, outputs = {}, {}
        for backend in backends:
            cfg = SimConfig(T=1.0, dt=args.dt, paths=args.paths, seed=0, backend=backend)
            best = float("inf")
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                res = monte_carlo(spec, cfg)
                best = min(best, time.perf_counter() - t0)
            times[backend], outputs[backend] = best, result_to_csv(res)
        speedup = (times["python"] / times["compiled"]) if "compiled" in times else float("nan")
        same = len(set(outputs.values())) == 1
        print(f"{name:<6} " + " ".join(f"{times[b]:>9.3f}s" for b in backends)
              + f"   {speedup:>6.2f}x  {same}")


if __name__ == "__main__":
    main()
