"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--paths N] [--repeat R]

Outputs are compared before timing: the backends share random streams
but call different ``log``/``cos``/``exp`` implementations, so they agree
to a few ulps rather than bit for bit.
"""
import argparse
import time

import numpy as np

from rlbridge import _kernels_py, covariance, length_law
from rlbridge.kernels import available_backends


def sampler_inputs(n_paths, seed=7):
    model = covariance.ou_from_zero(0.7, 1.2)
    law = length_law.atoms({0.8: 0.3, 1.5: 0.4, 2.5: 0.3})
    grid = np.linspace(0.0, 3.0, 301)
    keys = _kernels_py.path_keys(seed, np.arange(n_paths))
    u = _kernels_py.uniforms(keys, [0])[:, 0]
    tau = length_law.quantile(law, u)
    inside = grid < tau.max()
    rho_g, q_g = np.zeros_like(grid), np.ones_like(grid)
    rho_g[inside], q_g[inside] = model.rho(grid[inside]), model.q(grid[inside])
    return (grid, rho_g, q_g, tau, model.rho(tau), model.q(tau), keys, 1.0)


def posterior_inputs(n_obs, seed=7):
    model = covariance.brownian()
    locs = np.linspace(0.6, 5.0, 40)
    x = np.random.default_rng(seed).normal(0.0, 0.6, n_obs)
    return (x, 0.5, 1.0, 0.0, 1.0, model.rho(locs), model.q(locs), np.full(locs.size, -np.log(locs.size)))


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    backends = available_backends()
    if len(backends) < 2:
        print("compiled extension not importable; only the fallback is available")
    cases = {
        "sample_bridge_batch": ("sample_bridge_batch", sampler_inputs(args.paths)),
        "atom_posterior_batch": ("atom_posterior_batch", posterior_inputs(50 * args.paths)),
    }
    print(f"{'kernel':24s} " + " ".join(f"{b.BACKEND:>10s}" for b in backends) + "   speedup")
    for label, (name, inputs) in cases.items():
        outs = [getattr(b, name)(*inputs) for b in backends]
        for o in outs[1:]:
            if not np.allclose(o, outs[0], rtol=1e-12, atol=1e-14):
                raise SystemExit(f"{label}: backends disagree")
        secs = [best_of(getattr(b, name), inputs, args.repeat) for b in backends]
        speed = f"{secs[0] / secs[-1]:8.1f}x" if len(secs) > 1 else "       -"
        print(f"{label:24s} " + " ".join(f"{s * 1e3:8.1f}ms" for s in secs) + f"  {speed}")


if __name__ == "__main__":
    main()
