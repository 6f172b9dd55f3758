"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_backends.py [--repeat 5] [--json out.json]

Each row times one hot path under both backends (best of ``--repeat``,
after a warm-up call that also triggers numba compilation).
"""

import argparse
import json
import sys
import timeit

import numpy as np

from mogpaug import _accel
from mogpaug.gp import CoregionalizedModel, TrainingSet, log_marginal_likelihood
from mogpaug.kernels import Matern52


def cases(rng):
    X = rng.uniform(0, 50, size=(1500, 3))
    n_pts, n_out = 300, 6
    mask = rng.random((n_pts, n_out)) < 0.8
    out_idx, pt_idx = (a.astype(np.int64) for a in np.nonzero(mask.T))
    W = rng.normal(size=(len(out_idx),) * 2)
    W = W + W.T
    coef, kx = rng.normal(size=(n_out, n_out)), rng.normal(size=(n_pts, n_pts))
    train = rng.integers(-100, -30, size=(5000, 200)).astype(float)
    queries = rng.integers(-100, -30, size=(500, 200)).astype(float)

    data = TrainingSet(rng.uniform(0, 30, size=(n_pts, 2)),
                       np.where(mask, rng.normal(size=(n_pts, n_out)), np.nan), mask=mask)
    model = CoregionalizedModel.icm(Matern52(5.0), np.ones(n_out), kappa=np.full(n_out, 0.1),
                                    noise=np.full(n_out, 0.1), input_dim=2)

    def lml(impl):
        saved = _accel._active
        _accel._active = impl
        try:
            log_marginal_likelihood(model, data)
        finally:
            _accel._active = saved

    return {
        "self_distances 1500x3": lambda impl: impl.self_distances(X),
        f"contract_stacked n_obs={len(out_idx)}": lambda impl: impl.contract_stacked(
            W, coef, kx, out_idx, pt_idx, n_pts, n_out),
        "knn 500 queries x 5000 x 200, k=3": lambda impl: impl.knn(train, queries, 3),
        f"LML + gradient n_obs={len(out_idx)}": lml,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    if _accel.numba_impl is None:
        sys.exit("numba is not installed; nothing to compare")

    rows = []
    for name, fn in cases(np.random.default_rng(args.seed)).items():
        times = {}
        for label, impl in (("numpy", _accel.numpy_impl), ("numba", _accel.numba_impl)):
            fn(impl)
            times[label] = min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat))
        rows.append({"case": name, **times, "speedup": times["numpy"] / times["numba"]})

    width = max(len(r["case"]) for r in rows)
    print(f"{'case':<{width}}  {'numpy [s]':>10}  {'numba [s]':>10}  {'speedup':>8}")
    for r in rows:
        print(f"{r['case']:<{width}}  {r['numpy']:>10.4f}  {r['numba']:>10.4f}  {r['speedup']:>7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
