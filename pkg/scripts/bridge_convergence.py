"""Bridge ratio lambda_min(Pi I Rbar^2 I Pi) / (gamma / eps) under field-grid refinement."""

import argparse

from llab.config import load, shipped_config
from llab.model import build_model


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="JSON run configuration (default: shipped reference)")
    ap.add_argument("--levels", type=int, default=2, help="number of grid doublings")
    args = ap.parse_args()
    model = build_model(load(args.config) if args.config else shipped_config("reference"))
    prev = None
    for level in range(args.levels + 1):
        m = model if level == 0 else model.refined(2 ** level)
        rec = m.bridge()
        change = "" if prev is None else f"  change={rec.ratio / prev - 1:+.3%}"
        print(f"n_u={m.config.raw['field']['n_u']:<5d} matrix={rec.matrix_value:.6g}  "
              f"quadrature={rec.quadrature_value:.6g}  ratio={rec.ratio:.5f}{change}")
        prev = rec.ratio


if __name__ == "__main__":
    main()
