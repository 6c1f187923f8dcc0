#!/usr/bin/env python3
"""Distortion vs inverse load under joint peak-power and active-antenna
constraints: peak caps {0, 3, 8} dB over the power target, active fractions
{1.0, 0.5}. Points where the cap makes the power target infeasible are the
boundary (constant-envelope) solutions, flagged peak-clamped in the CSV."""
import argparse
import os

from lse_precoding.experiments import ExperimentConfig, emit_plot, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/fig2")
    args = ap.parse_args()

    cfg = ExperimentConfig(mode="sweep", out=args.out)
    cfg.alpha_inverse = tuple(1.0 + 0.1 * i for i in range(19))
    cfg.lambda_s = 1.0
    cfg.support = "disk"
    cfg.p_target = 0.5
    cfg.eta_targets = (1.0, 0.5)
    cfg.papr_db_targets = (0.0, 3.0, 8.0)
    files = run(cfg)
    curves = [files[k] for k in sorted(files) if k.startswith("eta")]
    svg = emit_plot(curves, os.path.join(args.out, "fig2.svg"),
                    title="distortion under peak-power caps, power 0.5")
    for path in curves + [svg]:
        print(path)


if __name__ == "__main__":
    main()
