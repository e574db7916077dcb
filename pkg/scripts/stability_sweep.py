#!/usr/bin/env python3
"""Perturbation-response sweep: scale a diagonal perturbation of the
generator by eps in {1e-2, 1e-3, 1e-4} and report the measured solution
difference against the sampled stability bound.  The measured column
should scale linearly in eps (log-log slope 1)."""

import argparse

import numpy as np

from scale_evolve.evolution_core import DiagonalGenerator, PropagatorSpec
from scale_evolve.fixtures import random_band_system
from scale_evolve.ovcyannikov import WConfig, stability_compare


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=48)
    args = ap.parse_args()

    V, fam, horizon, k, alpha, ap_ = random_band_system(args.seed, N=args.n)
    sys1 = WConfig(V=V, B=fam, horizon=horizon)
    t = 0.4 * horizon.T(ap_, alpha)
    alphas = (ap_, ap_ + (alpha - ap_) / 3, ap_ + 2 * (alpha - ap_) / 3, alpha)

    rng = np.random.default_rng(args.seed + 100)
    direction = rng.uniform(0.5, 1.0, size=args.n)
    print("eps,measured,bound,budget")
    rows = []
    for eps in (1e-2, 1e-3, 1e-4):
        d2 = V.generator.d + eps * direction
        V2 = PropagatorSpec(
            kind="diagonal", generator=DiagonalGenerator(d2), K_bound=1.0
        )
        sys2 = WConfig(V=V2, B=fam, horizon=horizon)
        rep = stability_compare(sys1, sys2, 0.0, t, alphas, k)
        rows.append((eps, rep.measured))
        print(f"{eps!r},{rep.measured!r},{rep.bound!r},{rep.budget!r}")
    slope = (np.log(rows[0][1]) - np.log(rows[-1][1])) / (
        np.log(rows[0][0]) - np.log(rows[-1][0])
    )
    print(f"# log-log slope: {slope:.4f}")


if __name__ == "__main__":
    main()
