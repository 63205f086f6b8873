"""Certificate margin and bridge ratio along a Lorentzian-width ladder."""

import argparse

from llab.config import load, shipped_config
from llab.model import build_model
from llab import commutator_lab as cl


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="JSON run configuration (default: shipped reference)")
    ap.add_argument("--eps", type=float, nargs="+", default=[0.4, 0.2, 0.1, 0.05])
    args = ap.parse_args()
    model = build_model(load(args.config) if args.config else shipped_config("reference"))
    lam = float(model.params["lambda"])
    margins = []
    for eps in args.eps:
        gamma = model.rates(eps).gamma
        cert = model.certificate(lam, eps, gamma=gamma)
        bridge = model.bridge(eps)
        margins.append(cert.margin)
        flags = "; ".join(cert.regime_flags) or "in regime"
        print(f"eps={eps:<6g} gamma={gamma:.5g}  margin={cert.margin:.5e}  threshold={cert.threshold:.5e}  "
              f"bridge ratio={bridge.ratio:.4f}  [{flags}]")
    if all(m > 0 for m in margins):
        print(f"log-log slope of margin vs eps: {cl.loglog_slope(args.eps, margins):.4f}")


if __name__ == "__main__":
    main()
