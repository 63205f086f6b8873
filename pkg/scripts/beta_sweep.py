"""Rates gamma_E over a beta ladder with the fitted log-slope and two-sided bound constant."""

import argparse

import numpy as np

from llab.config import load, shipped_config
from llab.model import build_model
from llab import fgr


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="JSON run configuration (default: shipped reference)")
    ap.add_argument("--betas", type=float, nargs="+", default=[2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
    args = ap.parse_args()
    model = build_model(load(args.config) if args.config else shipped_config("reference"))
    fm, params = model.fgr_model(), model.fgr_params()
    for E in fm.coupled_energies():
        s = fgr.temperature_sweep(fm, args.betas, E, params)
        print(f"E={E:+.4g}  slope={s.slope:.4f}  rel.err={abs(s.slope - E) / abs(E):.3%}  "
              f"k={s.k:.4g}  bound_holds={s.bound_holds}")
        for b, g in zip(s.betas, s.gammas):
            print(f"  beta={b:5.2f}  gamma_E={g:.6e}  gamma_E*exp(-beta E)={g * np.exp(-b * E):.6g}")


if __name__ == "__main__":
    main()
