"""Smallest |eigenvalue| of the P, P_l, P_r and P^0 blocks of L_lambda along a coupling ladder."""

import argparse

import numpy as np

from llab.config import load, shipped_config
from llab.model import build_model
from llab import liouvillian as lv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="JSON run configuration (default: shipped spectral)")
    ap.add_argument("--lambdas", type=float, nargs="+", default=[0.0, 1e-3, 2e-3, 4e-3, 8e-3, 1.6e-2])
    ap.add_argument("--zero-tol", type=float, default=1e-10)
    args = ap.parse_args()
    model = build_model(load(args.config) if args.config else shipped_config("spectral"))
    kit = model.kit
    print("lambda    " + "  ".join(f"{b:>22s}" for b in ("P", "P_l", "P_r", "P_zero")))
    for lam in args.lambdas:
        L = model.L(lam)
        cells = []
        for name in ("P", "P_l", "P_r", "P_zero"):
            mask = getattr(kit, name)
            if not mask.any():
                cells.append(f"{'-':>22s}")
                continue
            vals = np.abs(lv.block_eigensystem(L, mask)[0].values)
            cells.append(f"{vals.min():11.3e} ({int(np.sum(vals <= args.zero_tol)):3d} zeros)")
        print(f"{lam:<9g} " + "  ".join(cells))


if __name__ == "__main__":
    main()
