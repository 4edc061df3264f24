#!/usr/bin/env python3
"""Ablation at a fixed step budget on concentrated data.

Compares the score-hold exponential step, the first-order method, and
the noise-prediction multistep at orders 0..3 on a concentrated
Gaussian, across several schedules, at a fixed number of steps.

    python scripts/ablation_ordering.py --n 10
"""

import argparse

import numpy as np

from diffint import (
    GaussianMixture,
    ei_score_sample,
    epsilon_field,
    euler_sample,
    make_grid,
    reference_solve,
    tab_sample,
    vpsde,
)
from diffint.harness import draw_terminal_states

SCHEDULES = [
    ("uniform", None),
    ("quadratic", None),
    ("power_t", 3.0),
    ("power_t", 7.0),
    ("log_rho", None),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=10)
    parser.add_argument("--t0", type=float, default=1e-3)
    parser.add_argument("--std", type=float, default=0.1)
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    spec = vpsde()
    field = epsilon_field(GaussianMixture([1.0], [0.0], [args.std]), spec)
    batch = draw_terminal_states(spec, args.seed, args.batch)
    reference = reference_solve(spec, field, batch, t0=args.t0).terminal

    def err(run):
        return float(np.mean(np.abs(run.terminal - reference)))

    print(f"{'schedule':<16}{'ei_score':<12}{'euler':<12}"
          f"{'tab r=0':<12}{'tab r=1':<12}{'tab r=2':<12}{'tab r=3':<12}")
    for name, kappa in SCHEDULES:
        grid = make_grid(name, t0=args.t0, t_end=spec.t_end, n=args.n,
                         kappa=kappa, spec=spec)
        cells = [err(ei_score_sample(spec, field, grid, batch)),
                 err(euler_sample(spec, field, grid, batch))]
        cells += [err(tab_sample(spec, field, grid, r, batch)) for r in range(4)]
        label = name if kappa is None else f"{name}(k={kappa:g})"
        print(f"{label:<16}" + "".join(f"{c:<12.3e}" for c in cells))


if __name__ == "__main__":
    main()
