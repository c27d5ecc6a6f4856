"""Reproduce the four minimal-m_phi sweeps at desk scale.

Usage: python scripts/run_figures.py [fig1 fig2 fig3 fig4] [--out results] [--threads N] [--svg]

Each figure writes trials.csv, summary.csv and figN.csv (optionally figN.svg)
into <out>/<figN>/.
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from ridgelift import SearchExhausted, run_experiment
from ridgelift.harness import read_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("figures", nargs="*", default=["fig1", "fig2", "fig3", "fig4"])
    p.add_argument("--out", default="results")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--svg", action="store_true")
    args = p.parse_args()
    for name in args.figures:
        cfg, _ = read_config(CONFIGS / f"{name}.cfg", seed=args.seed)
        if args.svg:
            cfg = replace(cfg, svg=True)
        t0 = time.perf_counter()
        try:
            res = run_experiment(cfg, Path(args.out) / name, args.threads)
        except SearchExhausted as exc:
            print(f"{name}: {exc}")
            continue
        for pt in res.points:
            print(f"{name}  {cfg.sweep}={pt.value}  m_phi*={pt.m_phi_star}  "
                  f"m_phi*/d={pt.ratio:.3f}  mean={pt.mean_criterion:.4f}")
        print(f"{name}: {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
