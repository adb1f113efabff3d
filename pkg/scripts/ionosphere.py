"""Prediction experiment on UCI Ionosphere.

Download ionosphere.data from https://archive.ics.uci.edu/dataset/52/ionosphere
(34 numeric features, last column 'g'/'b'), then:

    python scripts/ionosphere.py /path/to/ionosphere.data --methods pcc lrpca lrpca:mle

Runs 10 repeats of an 80/20 split, selects lambda by 10-fold CV on the
training part, and prints mean test error with standard error per method.
Set MOSPCA_WORKERS to fit CV cells in parallel.
"""

import argparse

from mospca.data import SplitPlan, center, read_csv
from mospca.harness import ExperimentPlan, default_lambda_grid, run_experiment


def main():
    ap = argparse.ArgumentParser(description="Ionosphere classification experiment")
    ap.add_argument("data")
    ap.add_argument("--methods", nargs="+", default=["pcc", "lrpca", "lrpca:mle"])
    ap.add_argument("--r", type=int, default=2)
    ap.add_argument("--n-lambda", type=int, default=10)
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    X, y, _, _ = read_csv(args.data, -1, "classification")
    ds = center(X, y, "classification")
    plan = ExperimentPlan(
        methods=args.methods, r_grid=(args.r,), lambda_grid=tuple(default_lambda_grid(ds, args.n_lambda)),
        split=SplitPlan(seed=args.seed, test_fraction=0.2, n_folds=args.folds, n_repeats=args.repeats),
    )
    _, summary = run_experiment(ds, plan)
    print(f"n={ds.n} p={ds.p} r={args.r}")
    for row in summary:
        print(f"{row['method']:>8} {row['mode']:>4}  error {row['mean_test_error']:.3f} +/- {row['std_error']:.3f}"
              f"  v.e. {row['mean_variation_explained']:.3f}  failed {row['n_failed']}")


if __name__ == "__main__":
    main()
