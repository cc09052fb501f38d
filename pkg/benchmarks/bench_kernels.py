"""Benchmark: compiled radial-return kernel vs the pure-NumPy fallback.

Runs the constitutive hot loop (elastic predictor, per-point secant solve,
consistent tangents) on batches of quadrature-point states at several batch
sizes and plasticity fractions, then times one full high-fidelity Newton
step assembled with whichever kernel the package selected at import.

Usage::

    python3 benchmarks/bench_kernels.py [--sizes 1000 10000 100000]
"""

import argparse
import time

import numpy as np

import plastrom.materials._rr_numpy as rr_numpy
from plastrom.materials import ElastoplasticParams
from plastrom.materials.radial_return import USING_COMPILED_KERNEL

try:
    import plastrom.materials._rrc as rr_compiled
except ImportError:
    rr_compiled = None


def make_batch(n, plastic_fraction, seed=0):
    """States around the yield surface with a controlled plastic share."""
    rng = np.random.default_rng(seed)
    params = ElastoplasticParams()
    sig = rng.normal(scale=0.4 * params.sigma_y, size=(n, 6))
    eps_p = rng.normal(scale=1e-4, size=(n, 6))
    p = np.abs(rng.normal(scale=1e-3, size=n))
    scale = params.sigma_y / params.E
    deps = rng.normal(scale=0.3 * scale, size=(n, 6))
    n_plastic = int(plastic_fraction * n)
    deps[:n_plastic] *= 12.0          # push these well past yield
    return params, sig, eps_p, p, deps


def time_kernel(kernel, args, repeats=5):
    best = np.inf
    for _ in range(repeats):
        tic = time.perf_counter()
        out = kernel.radial_return_batch(*args)
        best = min(best, time.perf_counter() - tic)
        assert out[5] == -1
    return best


def bench_return_map(sizes, plastic_fraction):
    print(f"\nradial return + consistent tangent "
          f"({plastic_fraction:.0%} plastic points)")
    print(f"{'points':>10} {'numpy [ms]':>12} {'cython [ms]':>12} "
          f"{'speedup':>8}")
    for n in sizes:
        params, sig, eps_p, p, deps = make_batch(n, plastic_fraction)
        args = (sig, eps_p, p, deps, params.E, params.nu, params.sigma_y,
                params.n_pui, params.a_pui, 1e-10, 100, True)
        t_np = time_kernel(rr_numpy, args)
        if rr_compiled is None:
            print(f"{n:>10} {1e3 * t_np:>12.2f} {'n/a':>12} {'n/a':>8}")
            continue
        t_c = time_kernel(rr_compiled, args)
        out_np = rr_numpy.radial_return_batch(*args)
        out_c = rr_compiled.radial_return_batch(*args)
        worst = max(np.abs(a - b).max() / max(np.abs(a).max(), 1.0)
                    for a, b in zip(out_np[:5], out_c[:5]))
        print(f"{n:>10} {1e3 * t_np:>12.2f} {1e3 * t_c:>12.2f} "
              f"{t_np / t_c:>8.1f}   (max rel dev {worst:.1e})")


def bench_newton_step():
    from plastrom.assembly import Discretization, LoadSpec, build_constraints
    from plastrom.materials import StateBatch
    from plastrom.mesh import generate_plate_with_hole
    from plastrom.solvers import NewtonConfig, newton_solve

    mesh = generate_plate_with_hole(10, 10, 1, 2, 2)
    disc = Discretization(mesh)
    cons = build_constraints(mesh)
    params = ElastoplasticParams()
    load = LoadSpec(traction=(0.0, 120.0, 0.0))
    cfg = NewtonConfig()
    u0 = np.zeros(disc.n_dof)
    lam0 = np.zeros(cons.n_rows)
    states = StateBatch.zeros(disc.n_qp)
    tic = time.perf_counter()
    res = newton_solve(disc, cons, params, load, 1.0, u0, lam0, states, cfg)
    wall = time.perf_counter() - tic
    backend = "compiled" if USING_COMPILED_KERNEL else "numpy fallback"
    print(f"\nfull Newton step on {mesh.n_volume} elements "
          f"({backend} kernel): {wall:.3f}s, {res.iterations} iterations")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=[1000, 10000, 100000])
    args = parser.parse_args()
    print(f"selected back end at import: "
          f"{'compiled' if USING_COMPILED_KERNEL else 'numpy fallback'}")
    for fraction in (0.1, 0.9):
        bench_return_map(args.sizes, fraction)
    bench_newton_step()


if __name__ == "__main__":
    main()
