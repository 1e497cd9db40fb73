"""Compare the compiled and pure-Python cone kernels.

Times each kernel on random interior points, then whole solves on seeded
random SOCPs and on the 14-bus surrogate program.

    python3 benchmarks/bench_kernels.py [--repeat 200] [--cones 8] [--size 6]
"""

import argparse
import sys
import timeit
from pathlib import Path

import numpy as np

from iccopf import conic
from iccopf.conic import kernels
from iccopf.data import bundled
from iccopf.dcgrid import build_compact, load_scenario
from iccopf.surrogate import SecurityProfile, build_surrogate


def interior(rng, l, q):
    parts = [rng.uniform(0.1, 2.0, l)]
    for k in q:
        tail = rng.normal(size=k - 1)
        parts.append(np.concatenate([[np.linalg.norm(tail) + 0.5], tail]))
    return np.concatenate(parts)


def kernel_cases(l, q, seed=0):
    rng = np.random.default_rng(seed)
    s, z = interior(rng, l, q), interior(rng, l, q)
    x = rng.normal(size=s.shape[0])
    return s, z, x


def bench_kernels(kern, l, q, repeat):
    s, z, x = kernel_cases(l, q)
    d, beta, v, lam = kern.nt_scaling(s, z, l, q)
    calls = {
        "nt_scaling": lambda: kern.nt_scaling(s, z, l, q),
        "scale": lambda: kern.scale(x, d, beta, v, l, q),
        "scale_inv": lambda: kern.scale(x, d, beta, v, l, q, inverse=True),
        "jprod": lambda: kern.jprod(lam, x, l, q),
        "jdiv": lambda: kern.jdiv(lam, x, l, q),
        "max_step": lambda: kern.max_step(lam, x, l, q),
    }
    return {name: min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat for name, fn in calls.items()}


def random_programs(count):
    # the seeded generator lives with the tests
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
    from toys import random_socp
    return [random_socp(seed) for seed in range(count)]


def surrogate_program():
    case, scenario = load_scenario(bundled("case14_scenario.json"))
    model = build_compact(case, scenario)
    u = np.zeros(len(model.chance_rows))
    u[[model.row_index("branch:4-9"), model.row_index("branch:5-6")]] = np.sqrt(0.5)
    return build_surrogate(model, SecurityProfile(u, 0.95, 0.069))[0]


def bench_solves(kern, programs):
    def run():
        for p in programs:
            conic.solve(p, kernels=kern)
    return min(timeit.repeat(run, number=1, repeat=3))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--cones", type=int, default=8, help="number of second-order cones")
    ap.add_argument("--size", type=int, default=6, help="dimension of each cone")
    ap.add_argument("--orthant", type=int, default=40, help="nonnegative orthant size")
    ap.add_argument("--programs", type=int, default=50)
    args = ap.parse_args(argv)

    mods = kernels.available()
    print(f"active backend: {kernels.BACKEND}; available: {', '.join(m.BACKEND for m in mods)}")
    q = np.full(args.cones, args.size, dtype=np.intp)
    rows = {m.BACKEND: bench_kernels(m, args.orthant, q, args.repeat) for m in mods}
    names = list(next(iter(rows.values())))
    print(f"\nper-call time (us), l={args.orthant}, {args.cones} cones of size {args.size}")
    print(f"{'kernel':<12}" + "".join(f"{b:>12}" for b in rows) + ("     speedup" if len(rows) == 2 else ""))
    for name in names:
        vals = [rows[b][name] * 1e6 for b in rows]
        line = f"{name:<12}" + "".join(f"{v:12.2f}" for v in vals)
        if len(vals) == 2:
            line += f"{vals[1] / vals[0]:11.1f}x"
        print(line)

    programs = random_programs(args.programs)
    sur = [surrogate_program()]
    print("\nwhole solves (s)")
    for label, progs in ((f"{args.programs} random SOCPs", programs), ("14-bus surrogate", sur)):
        times = [bench_solves(m, progs) for m in mods]
        line = f"{label:<22}" + "".join(f"{m.BACKEND}={t:.3f}  " for m, t in zip(mods, times))
        if len(times) == 2:
            line += f"speedup {times[1] / times[0]:.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
