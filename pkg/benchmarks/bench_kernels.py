#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Runs each hot kernel on identical inputs through both backends and prints
a table of per-call times and speedups.  Useful for checking that the
extension actually pays off on a given machine and for spotting
regressions after a rebuild.

Usage:
    python benchmarks/bench_kernels.py [--steps 4096] [--dim 2] [--paths 64]
"""

import argparse
import time

import numpy as np

from roughsk import _kernels_py


def _best_of(repeat, fn, *args):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _make_inputs(steps, dim, paths, coarsen, seed):
    gen = np.random.Generator(np.random.Philox(key=seed))
    fine = np.vstack(
        [np.zeros((1, dim)), np.cumsum(gen.normal(0.0, 0.1, (steps, dim)), axis=0)]
    )
    fine = np.ascontiguousarray(fine)
    nc = steps // coarsen
    coarse = np.ascontiguousarray(fine[::coarsen])
    steps_areas = _kernels_py.step_areas(fine, coarsen, False)
    prefix = _kernels_py.prefix_areas(coarse, steps_areas)
    gaps = []
    g = 1
    while g <= nc:
        gaps.append(g)
        g *= 2
    gaps = np.asarray(gaps, dtype=np.int64)

    X = np.ascontiguousarray(gen.normal(0.0, 1.0, (paths, dim)))
    Y = np.ascontiguousarray(gen.normal(0.0, 1.0, (paths, dim)))
    M = np.ascontiguousarray(gen.normal(0.0, 0.2, (paths, dim, dim)) + np.eye(dim))
    Minv = np.ascontiguousarray(np.linalg.inv(M))
    E = np.ascontiguousarray(gen.normal(0.0, 0.1, (paths, dim, dim)) + 0.5 * np.eye(dim))
    sighalf = np.ascontiguousarray(gen.normal(0.0, 0.2, (paths, dim, dim)))
    F = np.ascontiguousarray(gen.normal(0.0, 1.0, (paths, dim)))
    dW = np.ascontiguousarray(gen.normal(0.0, 0.05, (paths, dim)))
    S = np.ascontiguousarray(gen.normal(0.0, 0.5, (paths, dim)))

    ou_E = np.ascontiguousarray(0.9 * np.eye(dim))
    ou_c = np.ascontiguousarray(0.3 * np.eye(dim))
    xi = np.ascontiguousarray(gen.normal(0.0, 1.0, (steps, dim)))
    y0 = np.zeros(dim)

    return {
        "level1_max_ratio": (fine, 0.01, 0.4, gaps),
        "level1_diff_max_ratio": (fine, fine[::-1].copy(), 0.01, 0.4, gaps),
        "level2_max_ratio": (prefix, coarse, 0.01 * coarsen, 0.8, gaps[gaps <= nc]),
        "level2_diff_max_ratio": (
            prefix,
            coarse,
            np.ascontiguousarray(prefix * 0.5),
            coarse,
            0.01 * coarsen,
            0.8,
            gaps[gaps <= nc],
        ),
        "step_areas": (fine, coarsen, True),
        "prefix_areas": (coarse, steps_areas),
        "em_fastslow_update": (X.copy(), Y.copy(), M, F, dW, 0.5, 0.001),
        "expeuler_fastslow_update": (
            X.copy(),
            Y.copy(),
            E,
            Minv,
            F,
            dW,
            sighalf,
            0.5,
            0.01,
        ),
        "limit_em_update": (X.copy(), Minv, S, F, dW, 0.01),
        "ou_exact_path": (ou_E, ou_c, xi, y0),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=4096, help="fine grid steps")
    parser.add_argument("--dim", type=int, default=2, help="state dimension")
    parser.add_argument("--paths", type=int, default=64, help="batch size for update kernels")
    parser.add_argument("--coarsen", type=int, default=16, help="coarse grid factor")
    parser.add_argument("--repeat", type=int, default=7, help="take the best of this many calls")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    try:
        from roughsk import _kernels
    except ImportError:
        print("compiled extension not available; nothing to compare")
        return 1

    if args.steps % args.coarsen != 0:
        parser.error("--steps must be a multiple of --coarsen")

    inputs = _make_inputs(args.steps, args.dim, args.paths, args.coarsen, args.seed)
    print(
        f"steps={args.steps} dim={args.dim} paths={args.paths} "
        f"coarsen={args.coarsen} best-of-{args.repeat}"
    )
    header = f"{'kernel':<26s} {'compiled':>12s} {'python':>12s} {'speedup':>9s}"
    print(header)
    print("-" * len(header))
    for name, call_args in inputs.items():
        # fresh copies for the in-place kernels so both backends see the
        # same starting state
        def run(mod, call_args=call_args):
            fresh = tuple(
                a.copy() if isinstance(a, np.ndarray) and a.flags.writeable else a
                for a in call_args
            )
            return getattr(mod, name)(*fresh)

        t_c = _best_of(args.repeat, run, _kernels)
        t_p = _best_of(args.repeat, run, _kernels_py)
        print(
            f"{name:<26s} {t_c * 1e6:>10.1f}us {t_p * 1e6:>10.1f}us {t_p / t_c:>8.1f}x"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
