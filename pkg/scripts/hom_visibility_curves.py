"""HOM visibility against the pair probability lambda^2 for a family of mode-match factors.

Writes one CSV row per lambda^2 with one column per xi, plus the ideal and
low-efficiency reference curves.
"""
import argparse
import csv
import sys
from dataclasses import dataclass

import numpy as np

from spdcsim import closed_forms as cf
from spdcsim.experiments import HomConfig, hom_visibility, lambda2_to_mu


@dataclass(frozen=True)
class HomCurvesConfig:
    t_a: float = 0.42
    t_b: float = 0.29
    eta_a: float = 0.68
    eta_b: float = 0.70
    xis: tuple = (0.9888, 0.9878, 0.9868, 0.9858, 0.9849)
    lambda2_min: float = 0.002
    lambda2_max: float = 0.1
    points: int = 50


def rows(cfg: HomCurvesConfig):
    for lam2 in np.linspace(cfg.lambda2_min, cfg.lambda2_max, cfg.points):
        mu = lambda2_to_mu(float(lam2))
        row = {"lambda2": float(lam2), "mu": mu}
        for xi in cfg.xis:
            row[f"V_xi={xi}"] = hom_visibility(HomConfig(mu, cfg.t_a, cfg.t_b, cfg.eta_a, cfg.eta_b, xi))
        row["V_ideal"] = hom_visibility(HomConfig(mu))
        row["V_ideal_approx"] = cf.hom_visibility_ideal(mu)
        row["V_low_eta_approx"] = cf.hom_visibility_low_efficiency(mu)
        yield row


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--points", type=int, default=HomCurvesConfig.points)
    p.add_argument("--out", help="CSV path (default stdout)")
    args = p.parse_args(argv)
    cfg = HomCurvesConfig(points=args.points)
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
