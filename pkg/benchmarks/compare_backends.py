"""Time the numba kernel against the pure numpy fallback.

    python3 benchmarks/compare_backends.py
    python3 benchmarks/compare_backends.py --trials 400 --horizon 120 --repeat 5

The first numba call compiles, so one untimed warmup run happens per
backend before the clock starts. Reported numbers are the best of
--repeat full Monte Carlo batches on the platoon channel-attack
scenario (the busiest code path: dynamics, watermarks and tampering
all active).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from maswatch import _kernels
from maswatch.engine import simulate
from maswatch.harness import platoon_preset


def run_once(s, horizon, trials, backend):
    return simulate(
        s.topology, s.model, s.controller, s.watermark, s.attacks,
        horizon, trials, s.master_seed, s.init_states, backend=backend,
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=100)
    parser.add_argument("--horizon", type=int, default=60)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    s = platoon_preset("channel")
    backends = ["numpy"] + (["numba"] if _kernels.HAS_NUMBA else [])
    if len(backends) == 1:
        print("numba not importable, timing the numpy backend only")

    results = {}
    checks = {}
    for backend in backends:
        run_once(s, 4, 2, backend)  # warmup / JIT compile
        best = float("inf")
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            data = run_once(s, args.horizon, args.trials, backend)
            best = min(best, time.perf_counter() - t0)
        results[backend] = best
        checks[backend] = data.states

    label = f"{args.trials} trials x {args.horizon} steps"
    for backend in backends:
        per_trial = 1e3 * results[backend] / args.trials
        print(f"{backend:>6}: {results[backend]:8.3f} s  ({per_trial:.2f} ms/trial, {label})")
    if len(backends) == 2:
        print(f"speedup: {results['numpy'] / results['numba']:.1f}x")
        drift = float(np.max(np.abs(checks["numpy"] - checks["numba"])))
        print(f"max state drift between backends: {drift:.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
