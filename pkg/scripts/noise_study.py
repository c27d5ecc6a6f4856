"""Minimal m_phi as the query-noise level grows, at fixed d.

A search that exhausts its cap is reported as "inf": no m_phi up to
m_x d reaches the threshold at that noise level.
"""

import argparse
from pathlib import Path

from ridgelift import SearchExhausted, find_min_mphi
from ridgelift.harness import read_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default=str(CONFIGS / "noise_study.cfg"))
    p.add_argument("--seed", type=int)
    args = p.parse_args()
    cfg, _ = read_config(args.config, seed=args.seed)
    print("sigma_scale  sigma            m_phi*")
    for scale in cfg.values:
        point = cfg.point(scale)
        try:
            star = find_min_mphi(point).m_phi_star
        except SearchExhausted:
            star = "inf"
        print(f"{scale:<11}  {point.sigma():<15.6g}  {star}")


if __name__ == "__main__":
    main()
