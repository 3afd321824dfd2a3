"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 3] [--json out.json]
"""

import argparse
import json
import time

import numpy as np

from typicality import _backend
from typicality.feee import FeeeTarget, initial_state
from typicality.spectrum import build_spin_spectrum


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def case_fill(k, n_states, rows):
    out = np.empty((rows, n_states))
    return lambda: k.rpse_fill(np.random.default_rng(0), out)


def case_observe(k, n_states, rows):
    ent = np.empty(rows)
    idx = np.array([0, n_states - 1], dtype=np.intp)
    pops = np.empty((rows, 2))
    return lambda: k.rpse_observe(np.random.default_rng(0), n_states, ent, idx, pops)


def case_mh(k, n_spins, steps):
    spec = build_spin_spectrum(n_spins)
    t = FeeeTarget.build(spec, 0.2 * n_spins, eliminate="ground")
    st = initial_state(t)
    a = np.ascontiguousarray(t.a)
    c = np.ascontiguousarray(t.curvature)
    out = np.empty((steps // 10, spec.n_states))

    def run():
        k.mh_advance(np.random.default_rng(0), st.current.copy(), t.free, t.lo, t.hi, a, c,
                     st.base_sd, st.proposal_scale, t.b, st.bracket, steps, 10, out, 1e-12)
    return run


CASES = [
    ("rpse_fill N=16 x 200000", case_fill, (16, 200_000)),
    ("rpse_fill N=1024 x 5000", case_fill, (1024, 5000)),
    ("rpse_observe N=2048 x 5000", case_observe, (2048, 5000)),
    ("mh_advance n=4, 20000 steps", case_mh, (4, 20_000)),
    ("mh_advance n=8, 20000 steps", case_mh, (8, 20_000)),
]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write the timings here")
    args = ap.parse_args(argv)
    names = _backend.available()
    results = []
    print(f"{'case':34s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, make, params in CASES:
        row = {"case": label}
        for name in names:
            row[name] = _best(make(_backend.get(name), *params), args.repeat)
        line = f"{label:34s}" + "".join(f"{row[n]:11.4f}s" for n in names)
        if "cython" in row and "python" in row:
            row["speedup"] = row["python"] / row["cython"]
            line += f"{row['speedup']:11.1f}x"
        print(line)
        results.append(row)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
