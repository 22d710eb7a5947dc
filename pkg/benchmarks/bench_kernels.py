"""Time the numba and numpy gate kernels on the same circuit workloads.

    python benchmarks/bench_kernels.py [--batch 64] [--repeats 5]

Each workload runs once per backend to warm up (this triggers JIT
compilation for numba) and then ``--repeats`` times; the best time is kept.
"""

import argparse
import time

import numpy as np

from bqnnpf.quantum import CircuitSpec, NoiseSpec, evaluate_batch, get_backend, set_backend, shift_jacobians
from bqnnpf.quantum.kernels import HAS_NUMBA


def workloads(batch: int, rng: np.random.Generator):
    out = []
    for m, layers in [(4, 2), (6, 3), (8, 3)]:
        spec = CircuitSpec(m, layers)
        f = rng.uniform(-np.pi, np.pi, (batch, 2 * m))
        p = rng.uniform(-np.pi, np.pi, spec.n_params)
        noise = NoiseSpec(0.01, 0.01, 0.01)
        out.append((f"statevector m={m} L={layers}", lambda f=f, p=p, s=spec: evaluate_batch(f, p, s)))
        if m <= 6:  # the numpy density path needs ~90 s per call at m=8
            out.append((f"density     m={m} L={layers}", lambda f=f, p=p, s=spec, n=noise: evaluate_batch(f, p, s, n)))
    spec = CircuitSpec(4, 2)
    f = rng.uniform(-np.pi, np.pi, (batch, 8))
    p = rng.uniform(-np.pi, np.pi, spec.n_params)
    out.append(("shift jacobians m=4 L=2", lambda: shift_jacobians(f, p, spec)))
    return out


def best_time(fn, repeats: int) -> float:
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    if not HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    previous = get_backend()
    jobs = workloads(args.batch, np.random.default_rng(0))
    results = {}
    try:
        for backend in ("numpy", "numba"):
            set_backend(backend)
            results[backend] = [best_time(fn, args.repeats) for _, fn in jobs]
    finally:
        set_backend(previous)

    print(f"batch={args.batch}, best of {args.repeats}")
    print(f"{'workload':<28}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for (name, _), t_np, t_nb in zip(jobs, results["numpy"], results["numba"]):
        print(f"{name:<28}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
