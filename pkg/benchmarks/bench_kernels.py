"""Compare the compiled simulation kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat R] [--widths 8,10,12]

Each row times one kernel on identical inputs under both backends and checks
that the results agree.
"""

from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from isqsynth import _kernels_py as pure
from isqsynth import gates as G
from isqsynth import isqir as I
from isqsynth import sim

try:
    from isqsynth import _kernels as compiled
except ImportError:
    compiled = None


def _cases(width: int, rng: np.random.Generator):
    state = rng.standard_normal((1 << width, 4)) + 1j * rng.standard_normal((1 << width, 4))
    h = G.default_db().matrix(I.CGate("H", (0,)))
    cp = G.default_db().matrix(I.CGate("CP", (0, 1), 3))
    ccx_local = np.array([0, 1, 2, 7, 4, 5, 6, 3])
    yield "apply_gate H", lambda k, s: k.apply_gate(s, width, [width // 2], h), state
    yield "apply_gate CP", lambda k, s: k.apply_gate(s, width, [0, width - 1], cp), state
    yield "perm_table CCX", lambda k, s: k.basis_perm_table(width, [0, 1, width - 1], ccx_local), None
    table = pure.basis_perm_table(width, [0, 1, width - 1], ccx_local)
    yield "apply_perm CCX", lambda k, s: k.apply_perm(s, table), state


def _circuit(width: int) -> list:
    # QFT-shaped workload: H layer plus all-pairs controlled phases
    out = []
    for a in range(width):
        out.append(I.CGate("H", (a,)))
        for b in range(a + 1, width):
            out.append(I.CGate("CP", (b, a), b - a))
        out.append(I.CGate("CX", (a, (a + 1) % width)))
    return out


def _time(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--widths", default="8,10,12")
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled kernels not built; only the numpy backend is available", file=sys.stderr)
    rng = np.random.default_rng(7)
    backends = [("numpy", pure)] + ([("compiled", compiled)] if compiled else [])
    print(f"{'kernel':<18}{'width':>6}" + "".join(f"{n + ' ms':>14}" for n, _ in backends) + f"{'speedup':>10}")
    for width in (int(w) for w in args.widths.split(",")):
        for name, run, state in _cases(width, rng):
            times, results = [], []
            for _, k in backends:
                def once(k=k):
                    s = None if state is None else state.copy()
                    r = run(k, s)
                    return s if r is None else r
                results.append(once())
                times.append(_time(once, args.repeat) * 1e3)
            agree = all(np.allclose(results[0], r) for r in results[1:])
            speed = f"{times[0] / times[1]:.2f}x" if len(times) > 1 else "-"
            print(f"{name:<18}{width:>6}" + "".join(f"{t:>14.3f}" for t in times)
                  + f"{speed:>10}" + ("" if agree else "  MISMATCH"))
        # whole-circuit unitary through sim, switching the module-level backend
        gates = _circuit(width)
        times, mats = [], []
        for _, k in backends:
            saved, sim.kernels = sim.kernels, k
            try:
                mats.append(sim.sqir_to_unitary(gates, width))
                times.append(_time(lambda: sim.sqir_to_unitary(gates, width), max(1, args.repeat // 2)) * 1e3)
            finally:
                sim.kernels = saved
        agree = all(np.allclose(mats[0], m) for m in mats[1:])
        speed = f"{times[0] / times[1]:.2f}x" if len(times) > 1 else "-"
        print(f"{'unitary circuit':<18}{width:>6}" + "".join(f"{t:>14.3f}" for t in times)
              + f"{speed:>10}" + ("" if agree else "  MISMATCH"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
