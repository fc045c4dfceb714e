"""Wall-clock comparison of the compiled and pure-Python kernels.

    python3 benchmarks/bench_kernels.py [--T 20000] [--repeat 3]

Each case runs through both backends, checks that the traces agree bit for
bit and prints the best time per backend and the speed-up.
"""

import argparse
import time

import numpy as np

from transcap import _core
from transcap.contention import line_network
from transcap.minplus import ImpulseResponse
from transcap.sim import SimConfig, run

FIELDS = ("link_backlog", "link_in", "link_out", "delivered", "opportunities",
          "empty_opportunities")


def _best(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _sim_case(name, n, cfg, repeat):
    top, g = line_network(n, 3)
    times, traces = {}, {}
    for be in ("python", "cython"):
        times[be], traces[be] = _best(lambda: run(top, g, cfg, backend=be), repeat)
    a, b = traces["python"], traces["cython"]
    same = all(np.array_equal(getattr(a, f), getattr(b, f)) for f in FIELDS)
    return name, times, same


def _compose_case(size, repeat):
    rng = np.random.default_rng(0)
    S1 = ImpulseResponse.from_increments(rng.integers(0, 3, size))
    S2 = ImpulseResponse.from_increments(rng.integers(0, 3, size))
    times, outs = {}, {}
    for be, mod in _core.backends().items():
        f = lambda: mod.minplus_compose(S1.table.astype(float), S2.table.astype(float))  # noqa: E731
        times[be], outs[be] = _best(f, repeat)
    same = np.array_equal(outs["python"], outs["cython"])
    return f"minplus compose {size + 1}x{size + 1}", times, same


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if "cython" not in _core.backends():
        raise SystemExit("compiled backend not built; run pip install -e . first")
    T = args.T
    cases = [
        _sim_case("aloha line n=10", 10,
                  SimConfig(mac="aloha", T=T, lam=0.08, p=0.2), args.repeat),
        _sim_case("centralized line n=5", 5,
                  SimConfig(mac="centralized", T=T, lam=0.3, schedule="0,1,2,0+3",
                            loop_start=1), args.repeat),
        _sim_case("csma line n=10", 10,
                  SimConfig(mac="csma", T=T, lam=0.1, track_occupancy=True), args.repeat),
        _compose_case(200, args.repeat),
    ]
    print(f"{'case':28s} {'python [s]':>11s} {'cython [s]':>11s} {'speed-up':>9s} identical")
    for name, t, same in cases:
        print(f"{name:28s} {t['python']:11.4f} {t['cython']:11.4f} "
              f"{t['python'] / t['cython']:9.1f} {same}")


if __name__ == "__main__":
    main()
