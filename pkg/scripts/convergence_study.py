#!/usr/bin/env python3
"""Convergence study: fitted error orders for every sampler family.

Runs each sampler on a shared single-Gaussian oracle over a doubling
ladder of step counts, measures the terminal error against the
reference solver, and prints errors plus the fitted order.

    python scripts/convergence_study.py --schedule uniform --n 10 20 40 80 160
"""

import argparse

import numpy as np

from diffint import (
    GaussianMixture,
    epsilon_field,
    make_grid,
    reference_self_check,
    reference_solve,
    run_sampler,
    vpsde,
)
from diffint.harness import draw_terminal_states, fit_order

SAMPLERS = [
    ("euler", {}),
    ("ei_score", {}),
    ("ddim", {}),
    ("tab", {"order": 1}),
    ("tab", {"order": 2}),
    ("tab", {"order": 3}),
    ("rho_ab", {"order": 2}),
    ("rho_mid", {}),
    ("rho_heun2", {}),
    ("rho_kutta3", {}),
    ("rho_rk4", {}),
    ("ipndm", {"order": 3}),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--schedule", default="uniform")
    parser.add_argument("--kappa", type=float, default=None)
    parser.add_argument("--t0", type=float, default=1e-3)
    parser.add_argument("--n", type=int, nargs="+", default=[10, 20, 40, 80, 160])
    parser.add_argument("--mean", type=float, default=0.5)
    parser.add_argument("--std", type=float, default=0.25)
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    spec = vpsde()
    field = epsilon_field(GaussianMixture([1.0], [args.mean], [args.std]), spec)
    batch = draw_terminal_states(spec, args.seed, args.batch)
    gap = reference_self_check(spec, field, batch, t0=args.t0)
    print(f"reference self-check gap: {gap:.2e}")
    reference = reference_solve(spec, field, batch, t0=args.t0).terminal

    header = f"{'sampler':<12}" + "".join(f"N={n:<10}" for n in args.n) + "order"
    print(header)
    print("-" * len(header))
    for name, kwargs in SAMPLERS:
        errors = []
        for n in args.n:
            grid = make_grid(
                args.schedule, t0=args.t0, t_end=spec.t_end, n=n,
                kappa=args.kappa, spec=spec,
            )
            run = run_sampler(name, spec, field, grid, batch, seed=args.seed, **kwargs)
            errors.append(float(np.mean(np.abs(run.terminal - reference))))
        order, _ = fit_order(args.n, errors)
        label = name + (f"(r={kwargs['order']})" if "order" in kwargs else "")
        cells = "".join(f"{e:<12.3e}" for e in errors)
        print(f"{label:<12}{cells}{order:5.2f}")


if __name__ == "__main__":
    main()
