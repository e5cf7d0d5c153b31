"""Time the numba kernels against their numpy twins on identical inputs.

Run with ``python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]``.
Each case is first run once per path (this also triggers JIT compilation,
reported separately), outputs are compared for equality, and then the best
of ``--repeat`` timed runs is kept.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from oblimatch import _accel
from oblimatch.bench import gen_double_bomb, gen_erdos_renyi, gen_random_weighted
from oblimatch.kernels import max_matching_dp, pair_greedy, vertex_greedy
from oblimatch.matchers import make_rng, preference_positions


def _vertex_shared(trials: int):
    inst, prefs = gen_double_bomb(50, 75)
    n = inst.n
    indptr, indices = inst.csr
    rows = np.repeat(np.arange(n), np.diff(indptr))
    keys = preference_positions(prefs)[rows, indices].astype(np.float64)
    rng = make_rng(1)
    orders = np.argsort(rng.random((trials, n)), axis=1)
    return "vertex_greedy shared keys (double-bomb 50/75)", lambda accel: vertex_greedy(
        indptr, indices, keys, orders, accel=accel)


def _vertex_per_trial(trials: int):
    inst = gen_erdos_renyi(200, 0.05, 3)
    n = inst.n
    indptr, indices = inst.csr
    rng = make_rng(2)
    keys = rng.random((trials, len(indices)))
    orders = np.argsort(rng.random((trials, n)), axis=1)
    return "vertex_greedy per-trial keys (G(200, 0.05))", lambda accel: vertex_greedy(
        indptr, indices, keys, orders, accel=accel)


def _pair(trials: int):
    inst = gen_random_weighted(120, 0.2, 4)
    e = inst.edge_array
    rng = make_rng(3)
    orders = np.argsort(rng.random((trials, len(e))), axis=1)
    return "pair_greedy (weighted G(120, 0.2))", lambda accel: pair_greedy(
        e[:, 0], e[:, 1], orders, inst.n, accel=accel)


def _dp(_trials: int):
    inst = gen_random_weighted(14, 0.6, 5)
    w = np.asarray(inst.w, dtype=np.float64)
    adj = np.zeros((inst.n, inst.n), dtype=np.bool_)
    for u, v in inst.edges:
        adj[u, v] = adj[v, u] = True
    return "max_matching_dp (n = 14)", lambda accel: max_matching_dp(w, adj, accel=accel)


CASES = (_vertex_shared, _vertex_per_trial, _pair, _dp)


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def _best(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", default=None, help="also write results as JSON")
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print(f"numba unavailable or disabled ({_accel.ENV_FLAG}); nothing to compare", file=sys.stderr)
        return 1
    rows = []
    print(f"{'kernel':48s} {'first numba':>12s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for make in CASES:
        name, run = make(args.trials)
        t0 = time.perf_counter()
        out_nb = run(True)
        first = time.perf_counter() - t0
        out_np = run(False)
        if not _same(out_nb, out_np):
            print(f"{name}: numba and numpy outputs differ", file=sys.stderr)
            return 2
        t_nb = _best(lambda: run(True), args.repeat)
        t_np = _best(lambda: run(False), args.repeat)
        rows.append({"kernel": name, "first_numba_s": first, "numba_s": t_nb, "numpy_s": t_np,
                     "speedup": t_np / t_nb})
        print(f"{name:48s} {first:12.4f} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"trials": args.trials, "repeat": args.repeat, "results": rows}, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
