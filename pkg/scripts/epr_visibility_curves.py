"""EPR interference visibility against the Sagnac pair rate 2 lambda^2 for several PBS leakages t_V.

The overall H efficiency is 0.1 in both arms; the V leakage enters as
t_V times the same detector efficiency.
"""
import argparse
import csv
import sys
from dataclasses import dataclass

import numpy as np

from spdcsim import closed_forms as cf
from spdcsim.experiments import EprConfig, epr_visibility, lambda2_to_mu


@dataclass(frozen=True)
class EprCurvesConfig:
    eta_h: float = 0.1
    t_h: float = 1.0
    t_vs: tuple = (0.007, 0.009, 0.011)
    rate_min: float = 0.002
    rate_max: float = 0.2
    points: int = 40


def rows(cfg: EprCurvesConfig):
    for rate in np.linspace(cfg.rate_min, cfg.rate_max, cfg.points):
        mu = lambda2_to_mu(float(rate) / 2)
        row = {"pair_rate": float(rate), "mu": mu}
        for t_v in cfg.t_vs:
            row[f"V_tV={t_v}"] = epr_visibility(EprConfig.from_pbs(mu, cfg.t_h, t_v, cfg.eta_h))
        row["V_no_leakage"] = cf.epr_visibility_simple(mu, cfg.eta_h)
        yield row


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--points", type=int, default=EprCurvesConfig.points)
    p.add_argument("--out", help="CSV path (default stdout)")
    args = p.parse_args(argv)
    cfg = EprCurvesConfig(points=args.points)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        data = list(rows(cfg))
        writer = csv.DictWriter(out, fieldnames=list(data[0]))
        writer.writeheader()
        writer.writerows(data)
    finally:
        if args.out:
            out.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
