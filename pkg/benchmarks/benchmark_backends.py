"""Times one training epoch (forward + BPTT) on both backends.

Run: python3 benchmarks/benchmark_backends.py [--reps N]
"""
import argparse
import time

import numpy as np

from dualsource.demand import DiscreteUniform, Rng, sample
from dualsource.dynamics import CostParams
from dualsource.nnc import backend
from dualsource.nnc.graph import numpy_epoch
from dualsource.nnc.network import init_weights, synthetic_architecture


def bench(fn, reps):
    fn()  # warm-up
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), sum(times) / len(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--T", type=int, default=100)
    ap.add_argument("--M", type=int, default=512)
    args = ap.parse_args()

    params = CostParams(h=5, b=495, c_r=0, c_e=20, f_r=0, f_e=0, l_r=2, l_e=0)
    net = init_weights(synthetic_architecture(1 + params.l_r + params.l_e), Rng(0))
    model = DiscreteUniform(0, 4)
    demands = np.stack(
        [sample(model, 0, Rng(1).substream(k), size=args.T) for k in range(args.M)]
    )

    configs = [("numpy tape", lambda: numpy_epoch(net, demands, params, 1.0))]
    if backend.fastpath_available():
        configs.append(
            ("compiled", lambda: backend._fast_epoch(net, demands, params, 1.0, None))
        )
    else:
        print("compiled kernel not built; benchmarking the tape only")

    print(f"epoch: T={args.T} periods x M={args.M} trajectories, "
          f"net dims {[l.W.shape for l in net.layers]}")
    results = {}
    for name, fn in configs:
        best, mean = bench(fn, args.reps)
        results[name] = best
        print(f"  {name:12s} best {best * 1e3:8.1f} ms   mean {mean * 1e3:8.1f} ms")
    if len(results) == 2:
        print(f"  speedup {results['numpy tape'] / results['compiled']:.1f}x")

    l1, g1, i1 = numpy_epoch(net, demands, params, 1.0)
    if backend.fastpath_available():
        l2, _, _ = backend._fast_epoch(net, demands, params, 1.0, None)
        print(f"loss agreement: tape {l1:.10f} vs compiled {l2:.10f}")


if __name__ == "__main__":
    main()
