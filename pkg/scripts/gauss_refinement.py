"""Ulam refinement study for the Gauss map: density error and subleading eigenvalue vs m."""

import argparse

import numpy as np

from stablelld.dynamics import Observable, TransferModel, gauss_map, leading_eig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, nargs="+", default=[128, 256, 512, 1024, 2048])
    args = ap.parse_args()
    print("m,l1_density,abs_lambda0_minus_1,abs_lambda2")
    for m in args.m:
        model = TransferModel(gauss_map(), Observable.power(0.5), m=m)
        ed = leading_eig(model, 0.0)
        exact = np.log2((1 + model.edges[1:]) / (1 + model.edges[:-1]))
        l1 = np.sum(np.abs(model.pi - exact))
        print(f"{m},{l1:.3e},{abs(ed.lam - 1):.1e},{abs(ed.lam2):.6f}")


if __name__ == "__main__":
    main()
