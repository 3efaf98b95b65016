#!/usr/bin/env python3
"""Compare the numba kernels with the pure-numpy fallback.

    python benchmarks/bench_backends.py [--repeat 3]

Times one particle block, one plugged-law chain block, a batch of full
replicates and a weighted KDE on each backend, and checks the two agree.
"""

import argparse
import time

import numpy as np

from unbiased_mvsde import EstimatorConfig, curie_weiss, neuron3d, run_replicates, set_backend
from unbiased_mvsde.analysis import kde
from unbiased_mvsde.estimator import advance_chain, chain_increments
from unbiased_mvsde.measure import SignedEmpiricalMeasure
from unbiased_mvsde.particles import EmpiricalMeasure, advance_block, particle_increments
from unbiased_mvsde.rng import Role, StreamKey


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases():
    key = StreamKey(11)
    out = []
    for model, l, n in [(curie_weiss(), 8, 60), (neuron3d(), 8, 60)]:
        x0 = EmpiricalMeasure.dirac(np.zeros(model.dim), n)
        incs = particle_increments(key, l, n, model.dim)
        block, _ = advance_block(model, l, x0, incs)
        cincs = chain_increments(key.with_role(Role.CHAIN), l, model.dim)
        out.append((f"particle block {model.name} l={l} N={n}",
                    lambda m=model, l=l, x=x0, i=incs: advance_block(m, l, x, i)[1].particles))
        out.append((f"chain block    {model.name} l={l}",
                    lambda m=model, b=block, d=model.dim, i=cincs: advance_chain(m, b, np.zeros(d), i)))
    cfg = EstimatorConfig()
    out.append(("200 replicates curie_weiss",
                lambda: np.array([r.measure.evaluate(lambda x: x[:, 0] ** 2)
                                  for r in run_replicates(curie_weiss(), cfg, 200, 3)])))
    rng = np.random.default_rng(0)
    meas = SignedEmpiricalMeasure(rng.normal(size=(20000, 1)), rng.normal(size=20000))
    grid = np.linspace(-4, 4, 801)
    out.append(("weighted KDE 20000 atoms x 801", lambda: kde(meas, 0, 0.1, grid).values))
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    print(f"{'case':<40} {'numpy [ms]':>11} {'numba [ms]':>11} {'speedup':>8} {'max |diff|':>11}")
    for name, fn in cases():
        set_backend("numpy")
        t_np, r_np = best_of(fn, args.repeat)
        set_backend("numba")
        t_nb, r_nb = best_of(fn, args.repeat)
        diff = float(np.max(np.abs(np.asarray(r_np) - np.asarray(r_nb))))
        print(f"{name:<40} {1e3 * t_np:>11.3f} {1e3 * t_nb:>11.3f} {t_np / t_nb:>7.1f}x {diff:>11.2e}")
    set_backend(None)


if __name__ == "__main__":
    main()
