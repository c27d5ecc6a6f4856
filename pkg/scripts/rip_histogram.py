"""Empirical isometry ratios ||Phi(X)||^2 / ||X||_F^2 versus m_phi.

For random rank-r matrices the ratios concentrate around 1 as m_phi
grows; the largest deviation is the empirical isometry constant.
"""

import argparse

from ridgelift import build_plan, operator_for, rip_diagnostic


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--d", type=int, default=40)
    p.add_argument("--m-x", type=int, default=10, dest="m_x")
    p.add_argument("--rank", type=int, default=1)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    base = args.rank * (args.d + args.m_x)
    print("m_phi   kappa_hat  min_ratio  max_ratio")
    for mult in (1, 2, 5, 10, 20):
        m_phi = mult * base
        op = operator_for(build_plan(args.d, args.rank, args.m_x, m_phi, 1e-3, seed=args.seed))
        diag = rip_diagnostic(op, args.rank, args.trials, args.seed)
        print(f"{m_phi:<7} {diag.kappa_hat:<10.4f} {diag.ratios.min():<10.4f} "
              f"{diag.ratios.max():.4f}")


if __name__ == "__main__":
    main()
