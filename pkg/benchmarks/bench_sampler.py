"""Compare the compiled and pure-Python trajectory kernels.

Usage: python benchmarks/bench_sampler.py [--n N] [--repeat R]

Both kernels run the same clocks with the same seed; the script reports
trajectories per second and checks that tick times agree.
"""
from __future__ import annotations

import argparse
import time

from ticksim import _backend
from ticksim.clockmodel import ladder_clock, quasi_ideal_clock, thermodynamic_clock
from ticksim.tickstats import sample_trajectories

CASES = {
    "ladder d=5": (lambda: ladder_clock(5, n_ticks=3), 40.0),
    "quasi-ideal d=8": (lambda: quasi_ideal_clock(8, n_ticks=3), 40.0),
    "thermodynamic d=3": (lambda: thermodynamic_clock(n_ticks=3), 60.0),
}


def _time(spec, t_max, n, backend, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        records = sample_trajectories(spec, t_max, n, seed=1, backend=backend)
        best = min(best, time.perf_counter() - start)
    return best, records


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=2000, help="trajectories per run")
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if "cython" not in _backend.KERNELS:
        print("compiled kernel not built; only the Python kernel is available")
    print(f"{'clock':<20}{'backend':<9}{'traj/s':>12}{'speedup':>10}{'max |dt|':>12}")
    for label, (make, t_max) in CASES.items():
        spec = make()
        py_time, py_rec = _time(spec, t_max, max(args.n // 10, 50), "python", 1)
        py_rate = max(args.n // 10, 50) / py_time
        print(f"{label:<20}{'python':<9}{py_rate:>12.0f}{'1.0':>10}{'':>12}")
        if "cython" not in _backend.KERNELS:
            continue
        cy_time, cy_rec = _time(spec, t_max, args.n, "cython", args.repeat)
        cy_rate = args.n / cy_time
        diff = max(
            (abs(a - b) for ra, rb in zip(py_rec, cy_rec) for a, b in zip(ra.tick_times, rb.tick_times)),
            default=0.0,
        )
        print(f"{'':<20}{'cython':<9}{cy_rate:>12.0f}{cy_rate / py_rate:>10.1f}{diff:>12.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
