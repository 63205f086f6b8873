"""Per-beta number-bound fits and kernel distances of the eigenvectors of L_lambda."""

import argparse

from llab.config import load, shipped_config
from llab.model import build_model
from llab import pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="JSON run configuration (default: shipped spectral)")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    model = build_model(load(args.config) if args.config else shipped_config("spectral"))
    lams = pipeline._ladder(model, "lambda_ladder", "lambda")
    for beta in pipeline._ladder(model, "beta_ladder", "beta"):
        mb = model.with_beta(beta)
        points = pipeline.pool_map(lambda lam: pipeline.diagnose_point(mb, lam), lams, args.threads)
        print(f"beta={beta:g}")
        for p in points:
            print(f"  lambda={p['lambda']:<7g} max number bound={p['max_number_bound']:.5e}  "
                  f"min distance to ker L0={p['min_distance_to_ker_L0_tracked']:.5e}  "
                  f"virial A_f={p['virial_relative']['A_f']:.1e}")


if __name__ == "__main__":
    main()
