"""Write a synthetic data set drawn from the generative model to CSV.

    python scripts/make_synthetic.py synthetic.csv --n 500 --p 20 --r 3 --seed 0
"""

import argparse

import numpy as np

from mospca.synthetic import SyntheticSpec, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--p", type=int, default=20)
    ap.add_argument("--r", type=int, default=3)
    ap.add_argument("--q", type=int, default=1)
    ap.add_argument("--sigma-x2", type=float, default=1.0)
    ap.add_argument("--alpha", type=float, default=25.0)
    ap.add_argument("--sigma-y2", type=float, default=0.01)
    ap.add_argument("--classification", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    g = generate(SyntheticSpec(
        n=args.n, p=args.p, r=args.r, q=args.q, sigma_x2=args.sigma_x2, alpha=args.alpha,
        sigma_y2=args.sigma_y2, classification=args.classification, seed=args.seed,
    ))
    y = g.y.reshape(args.n, -1)
    names = [f"x{i}" for i in range(args.p)] + (["y"] if y.shape[1] == 1 else [f"y{j}" for j in range(y.shape[1])])
    fmt = ["%.17g"] * args.p + (["%d"] if args.classification else ["%.17g"] * y.shape[1])
    np.savetxt(args.out, np.c_[g.X, y], delimiter=",", header=",".join(names), comments="", fmt=fmt)
    print(f"wrote {args.out}: n={args.n}, p={args.p}, true r={args.r}")


if __name__ == "__main__":
    main()
