"""Compare the compiled and numpy kernel backends.

Times each pointwise kernel at several array sizes, then one full
Strang step so the kernels can be seen next to the FFT cost.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--json out.json]
"""
from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from snlslab import kernels
from snlslab.integrator import CutoffSpec, SolverConfig, SplitStepper, initial_state
from snlslab.noise import NoiseSpec, RngStream
from snlslab.spectral import Field, GridSpec

SIZES = (256, 4096, 65536, 1 << 20)


def _best(stmt, repeat: int, number: int) -> float:
    return min(timeit.repeat(stmt, repeat=repeat, number=number)) / number


def bench_kernels(repeat: int) -> list[dict]:
    rows = []
    rng = np.random.default_rng(0)
    for n in SIZES:
        u0 = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * 0.3
        dw = rng.standard_normal(n) * 1e-3
        number = max(1, 200_000 // n)
        for name in kernels.available_backends():
            impl = kernels.get_backend(name)
            u = u0.copy()
            rows.append({"kernel": "phase_kick p=7", "n": n, "backend": name,
                         "seconds": _best(lambda: impl.phase_kick(u, 1e-3, 3.0, dw), repeat, number)})
            rows.append({"kernel": "phase_kick p=3", "n": n, "backend": name,
                         "seconds": _best(lambda: impl.phase_kick(u, 1e-3, 1.0, dw), repeat, number)})
            rows.append({"kernel": "abs_pow_sum p=12/5", "n": n, "backend": name,
                         "seconds": _best(lambda: impl.abs_pow_sum(u0, 2.4), repeat, number)})
            rows.append({"kernel": "abs_pow_sum p=8", "n": n, "backend": name,
                         "seconds": _best(lambda: impl.abs_pow_sum(u0, 8.0), repeat, number)})
            rows.append({"kernel": "abs_max", "n": n, "backend": name,
                         "seconds": _best(lambda: impl.abs_max(u0), repeat, number)})
    return rows


def bench_step(repeat: int) -> list[dict]:
    """One noisy Strang step with each backend."""
    rows = []
    cases = [(1, 256), (1, 4096), (2, 256), (3, 64)]
    for dim, n in cases:
        grid = GridSpec(dim, n, 20.0)
        u0 = Field.from_function(grid, lambda *x: 0.8 * np.exp(-sum(c**2 for c in x) / 2))
        cfg = SolverConfig(dt=1e-4, power=7)
        spec = NoiseSpec(amplitude=0.3, sigma=2.0, k_max=4)
        for name in kernels.available_backends():
            with kernels.use_backend(name):
                stepper = SplitStepper(grid, cfg, spec, CutoffSpec())
                state = initial_state(u0)
                rng = RngStream(0, (0,))
                number = max(1, 20_000 // grid.npoints)
                sec = _best(lambda: stepper.step(state, rng), repeat, number)
            rows.append({"kernel": f"strang step d={dim}", "n": grid.npoints,
                         "backend": name, "seconds": sec})
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--json", metavar="PATH")
    args = ap.parse_args(argv)
    rows = bench_kernels(args.repeat) + bench_step(args.repeat)

    print(f"backends: {', '.join(kernels.available_backends())} (active: {kernels.BACKEND})")
    print(f"{'kernel':22s} {'points':>9s} {'backend':>8s} {'time':>12s} {'speedup':>8s}")
    ref = {(r["kernel"], r["n"]): r["seconds"] for r in rows if r["backend"] == "python"}
    for r in rows:
        sp = ref[(r["kernel"], r["n"])] / r["seconds"]
        print(f"{r['kernel']:22s} {r['n']:9d} {r['backend']:>8s} "
              f"{r['seconds'] * 1e6:10.1f}us {sp:7.2f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
