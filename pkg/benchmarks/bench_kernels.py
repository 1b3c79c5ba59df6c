"""Time the compiled block kernel against the numpy fallback.

Reports the cost of one RK4 step for the preset system sizes, plus a dense
single-block reference (``lindblad_rhs`` on full matrices) for scale.

    python3 benchmarks/bench_kernels.py --steps 200
"""
import argparse
import time

import numpy as np

from darkmodes import _backend
from darkmodes._sectors import choose_layout
from darkmodes.dynamics import CouplingSchedule, _hamiltonian_sparse, lindblad_rhs
from darkmodes.hilbert import SystemSpec
from darkmodes.thermal import product_thermal

CASES = {
    "two modes, d=5": (SystemSpec.uniform(2, 5, 0.1), [0.25, 0.25]),
    "three modes, d=5": (SystemSpec.uniform(3, 5, 0.1), [0.1] * 3),
    "five detuned modes, d=3": (SystemSpec.uniform(5, 3, 0.05, detunings=[(j - 2) / 15 for j in range(5)]),
                                [1 / 3] * 5),
    "three modes, d=10": (SystemSpec.uniform(3, 10, 0.1), [0.1] * 3),
}


def per_step(fn, steps, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(steps)
        best = min(best, time.perf_counter() - t0)
    return best / steps


def dense_rk4(rho, h, gamma, dt, steps):
    for _ in range(steps):
        k1 = lindblad_rhs(rho, h, gamma)
        k2 = lindblad_rhs(rho + 0.5 * dt * k1, h, gamma)
        k3 = lindblad_rhs(rho + 0.5 * dt * k2, h, gamma)
        k4 = lindblad_rhs(rho + dt * k3, h, gamma)
        rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--skip-dense", action="store_true", help="skip the dense reference")
    args = ap.parse_args()

    backends = ["python"]
    try:
        _backend.get_kernels("compiled")
        backends.insert(0, "compiled")
    except ImportError:
        print("compiled kernel not built; timing the fallback only")

    print(f"{'system':26s} {'dim':>5s} {'blocks':>6s} " + " ".join(f"{b + ' us/step':>18s}" for b in backends)
          + f" {'dense us/step':>14s} {'speedup':>8s}")
    for name, (spec, gs) in CASES.items():
        rho0 = product_thermal(spec, warn=False).entries
        layout = choose_layout(spec, rho0)
        h = _hamiltonian_sparse(spec, gs)
        hd, hi, hp = layout.permuted_csr(h)
        lay = (layout.sizes, layout.offsets, layout.starts, layout.n_exc, layout.jump_target)
        times = {}
        for b in backends:
            kern = _backend.get_kernels(b)
            flat = layout.pack(rho0).astype(complex)
            times[b] = per_step(lambda n: kern.rk4_advance(flat, *lay, hd, hi, hp, 1.0, 0.005, n),
                                args.steps, args.repeat)
        dense = np.nan
        if not args.skip_dense and spec.dim <= 600:
            hm = h.toarray()
            dense = per_step(lambda n: dense_rk4(rho0, hm, 1.0, 0.005, n), max(args.steps // 10, 1), 1)
        speed = times["python"] / times["compiled"] if "compiled" in times else np.nan
        print(f"{name:26s} {spec.dim:5d} {layout.n_blocks:6d} "
              + " ".join(f"{1e6 * times[b]:18.1f}" for b in backends)
              + f" {1e6 * dense:14.1f} {speed:8.2f}")


if __name__ == "__main__":
    main()
