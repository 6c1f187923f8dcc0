#!/usr/bin/env python3
"""Antenna-saving study: for each constraint set, the random-selection
fraction whose ridge baseline matches the penalized precoder's distortion.
Covers the unconstrained case at inverse load 2 and the peak-capped cases
near unit load."""
import argparse

from lse_precoding.experiments import ExperimentConfig, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/saving")
    args = ap.parse_args()

    cfg = ExperimentConfig(mode="saving", out=f"{args.out}/unconstrained")
    cfg.alpha_inverse = (2.0,)
    cfg.lambda_s = 1.0
    cfg.p_target = 0.5
    cfg.eta_targets = (0.5, 0.3)
    print(run(cfg)["saving"])

    cfg = ExperimentConfig(mode="saving", out=f"{args.out}/peak_capped")
    cfg.alpha_inverse = (1.1, 1.2)
    cfg.lambda_s = 1.0
    cfg.support = "disk"
    cfg.p_target = 0.5
    cfg.eta_targets = (0.5,)
    cfg.papr_db_targets = (0.0, 3.0, 8.0)
    print(run(cfg)["saving"])


if __name__ == "__main__":
    main()
