#!/usr/bin/env python3
"""Asymptotic distortion vs inverse load for the quadratic + zero-norm
penalized precoder at total power 0.5, active fractions {1.0, 0.5, 0.3},
plus the SVG overlay. Replica-only; runs in seconds."""
import argparse
import os

from lse_precoding.experiments import ExperimentConfig, emit_plot, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/fig1")
    args = ap.parse_args()

    cfg = ExperimentConfig(mode="sweep", out=args.out)
    cfg.alpha_inverse = tuple(1.0 + 0.1 * i for i in range(19))
    cfg.lambda_s = 1.0
    cfg.p_target = 0.5
    cfg.eta_targets = (1.0, 0.5, 0.3)
    files = run(cfg)
    curves = [files[k] for k in ("eta1", "eta0.5", "eta0.3")]
    svg = emit_plot(curves, os.path.join(args.out, "fig1.svg"),
                    title="distortion vs inverse load, power 0.5")
    for path in curves + [svg]:
        print(path)


if __name__ == "__main__":
    main()
