"""Compare the numba and numpy paths of the simulation and propagation kernels.

    python benchmarks/bench_kernels.py [--runs 200000] [--repeat 5]

Both paths must agree exactly; the script checks that before timing.
"""

import argparse
import time

import numpy as np

from attackplan import _kernels
from attackplan.fixtures import running_example_model
from attackplan.pomdp import solve_exact


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--runs", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    if _kernels.run_policy_numba is None:
        print("numba not available, nothing to compare")
        return

    model = running_example_model()
    _, policy = solve_exact(model)
    na, nc = policy.flatten(model)
    rng = np.random.default_rng(0)
    starts = rng.choice(len(model.b0), size=args.runs, p=model.b0)
    tables = (model.next_state.astype(np.int64), model.observation.astype(np.int64),
              np.ascontiguousarray(model.reward), na, nc, starts.astype(np.int64))

    ref, _ = _kernels.run_policy_numpy(*tables)
    got, _ = _kernels.run_policy_numba(*tables)  # also triggers compilation
    assert np.array_equal(ref, got), "kernels disagree"

    t_np = best_of(lambda: _kernels.run_policy_numpy(*tables), args.repeat)
    t_nb = best_of(lambda: _kernels.run_policy_numba(*tables), args.repeat)
    print(f"run_policy   runs={args.runs:>8}  numpy {t_np * 1e3:8.2f} ms  numba {t_nb * 1e3:8.2f} ms  "
          f"speedup {t_np / t_nb:5.1f}x")

    k = 64
    m = rng.random((k, k))
    m /= m.sum(axis=1, keepdims=True)
    d = np.zeros(k)
    d[0] = 1.0
    for days in (50, 365):
        a = _kernels.propagate_numpy(d, m, days)
        b = _kernels.propagate_numba(d, m, days)
        assert np.allclose(a, b, atol=1e-12)
        t_np = best_of(lambda: _kernels.propagate_numpy(d, m, days), args.repeat)
        t_nb = best_of(lambda: _kernels.propagate_numba(d, m, days), args.repeat)
        print(f"propagate    days={days:>8}  numpy {t_np * 1e3:8.3f} ms  numba {t_nb * 1e3:8.3f} ms  "
              f"speedup {t_np / t_nb:5.1f}x")


if __name__ == "__main__":
    main()
