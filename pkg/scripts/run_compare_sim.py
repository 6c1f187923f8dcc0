#!/usr/bin/env python3
"""Replica prediction vs finite-n Monte Carlo at the calibrated operating
point (inverse load 2, power 0.5, half the antennas active), including the
distribution distance against the decoupled symbol law. Minutes at the
default size."""
import argparse

from lse_precoding.experiments import ExperimentConfig, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/compare")
    ap.add_argument("--seed", type=int, default=20240)
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--trials", type=int, default=200)
    args = ap.parse_args()

    cfg = ExperimentConfig(mode="compare", out=args.out, seed=args.seed)
    cfg.alpha_inverse = (2.0,)
    cfg.lambda_s = 1.0
    cfg.p_target = 0.5
    cfg.eta_target = 0.5
    cfg.n = args.n
    cfg.trials = args.trials
    for name, path in sorted(run(cfg).items()):
        print(f"{name}: {path}")


if __name__ == "__main__":
    main()
