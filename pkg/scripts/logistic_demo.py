#!/usr/bin/env python3
"""Evolve a small birth-and-death hierarchy both ways: quasi-observables
forward and correlation functions through the adjoint problem, then
cross-check the pairing <G_t, k_0> = <G_0, k_t*> within budgets."""

import argparse

import numpy as np

from scale_evolve.fixtures import random_logistic_params
from scale_evolve.logistic import (
    evolve_hierarchy,
    hierarchy_norm,
    hierarchy_pairing,
    random_hierarchy,
)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--grid", type=int, default=16)
    ap.add_argument("--n-max", type=int, default=2)
    ap.add_argument("--t", type=float, default=0.05)
    ap.add_argument("--alpha", type=float, default=1.2)
    ap.add_argument("--alpha-prime", type=float, default=0.3)
    args = ap.parse_args()

    p = random_logistic_params(args.seed, L=args.grid)
    rng = np.random.default_rng(args.seed)
    G0 = random_hierarchy(rng, args.grid, args.n_max, "quasiobservable", h=p.h)
    k0 = random_hierarchy(rng, args.grid, args.n_max, "correlation", h=p.h)

    Gt, res_g = evolve_hierarchy(p, G0, args.t, args.alpha, args.alpha_prime)
    kt, res_k = evolve_hierarchy(p, k0, args.t, args.alpha, args.alpha_prime)

    print(f"forward:  n_terms={res_g.n_terms} rho={res_g.rho:.3f} "
          f"total_error={res_g.total_error:.3e}")
    print(f"adjoint:  n_terms={res_k.n_terms} rho={res_k.rho:.3f} "
          f"total_error={res_k.total_error:.3e}")
    print(f"||G_0|| = {hierarchy_norm(G0, args.alpha):.6f}  "
          f"||G_t|| = {hierarchy_norm(Gt, args.alpha_prime):.6f}")
    lhs = hierarchy_pairing(Gt, k0)
    rhs = hierarchy_pairing(G0, kt)
    print(f"<G_t, k_0> = {lhs:.10f}")
    print(f"<G_0, k_t> = {rhs:.10f}")
    print(f"pairing gap = {abs(lhs - rhs):.3e}")


if __name__ == "__main__":
    main()
