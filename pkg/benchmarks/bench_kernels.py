"""Numba vs numpy timings for the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Inputs are sized like the desk-scale experiments (N = 10, |S| = 2 or 3).
The first numba call includes compilation (or a cache load) and is
reported separately.
"""
import argparse
import json
import time

import numpy as np

from mblprop import kernels


def _flip_inputs(rng, n_s=8, n_c=128, samples=500):
    delta = rng.normal(size=(n_s, n_c)) * 3
    amps = np.exp(1j * rng.uniform(0, 2 * np.pi, (n_s, n_c)))
    return delta, amps, rng.uniform(0, 1e4, samples)


def _residual_inputs(rng, dim=1024, n_s=4):
    n_c = dim // n_s
    w, _ = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    ws = w.reshape(n_s, n_c, dim)
    blocks = np.stack([ws[s].conj().T @ ws[t] for s in range(n_s) for t in range(n_s)])
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return a, np.sort(rng.normal(size=dim)), 3.7, blocks, n_c


def _gap_inputs(rng, dim=128):
    e = np.sort(rng.normal(size=dim))
    return ((e[None, :] - e[:, None])[np.triu_indices(dim, 1)],)


CASES = {
    "flip_metric": _flip_inputs,
    "eigenbasis_residual": _residual_inputs,
    "min_gap_pair": _gap_inputs,
}


def _best_of(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def run(repeat: int = 5, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    out = {"backend": kernels.BACKEND, "kernels": {}}
    for name, make in CASES.items():
        args = make(rng)
        row = {"numpy_s": _best_of(kernels.NUMPY[name], args, repeat)}
        if kernels.HAVE_NUMBA:
            t0 = time.perf_counter()
            ref = kernels.NUMBA[name](*args)
            row["numba_first_call_s"] = time.perf_counter() - t0
            row["numba_s"] = _best_of(kernels.NUMBA[name], args, repeat)
            row["speedup"] = row["numpy_s"] / row["numba_s"]
            row["max_abs_diff"] = float(np.max(np.abs(np.asarray(ref) - np.asarray(kernels.NUMPY[name](*args)))))
        out["kernels"][name] = row
    return out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", help="also write the results to this file")
    args = p.parse_args()
    res = run(args.repeat, args.seed)
    print(f"active backend: {res['backend']}")
    print(f"{'kernel':<22}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max diff':>12}")
    for name, row in res["kernels"].items():
        nb = row.get("numba_s", float("nan"))
        print(f"{name:<22}{row['numpy_s']:>12.4g}{nb:>12.4g}{row.get('speedup', float('nan')):>10.2f}"
              f"{row.get('max_abs_diff', float('nan')):>12.2g}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(res, fh, indent=2)


if __name__ == "__main__":
    main()
