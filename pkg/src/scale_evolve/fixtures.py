"""Seeded random fixtures shared by the verify suite and the test suite.

Every builder is deterministic in its seed, so reports derived from them
are byte-stable.
"""

from __future__ import annotations

import numpy as np

from .evolution_core import DiagonalGenerator, PropagatorSpec
from .logistic import LogisticParams, symmetrize_kernel
from .ode_system import OdeModel
from .ovcyannikov import HorizonTable
from .scale_operator import OperatorFamily, band_matrix, fit_majorant
from .scale_space import ScaleVector


def random_band_system(
    seed: int,
    N: int = 64,
    alpha: float = 1.0,
    alpha_prime: float = 0.25,
    alpha_star: float = 0.0,
):
    """A diagonal contraction V plus a random two-band perturbation B,
    scaled so the fitted horizon is order one.

    Returns (V, family, horizon, k, alpha, alpha_prime).
    """
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.2, 2.0, size=N) * (1.0 + 0.05 * np.arange(N))
    V = PropagatorSpec(kind="diagonal", generator=DiagonalGenerator(d), K_bound=1.0)
    upper = rng.uniform(0.05, 0.4, size=N - 1)
    lower = rng.uniform(0.02, 0.2, size=N - 1) * np.exp(-0.1 * np.arange(N - 1))
    B = band_matrix(N, {1: upper, -1: lower})
    grid = np.linspace(alpha_star + 0.1, alpha + 0.5, 12)
    M = fit_majorant(B, alpha_star, grid)
    horizon = HorizonTable(alpha_star=alpha_star, K=1.0, M=M)
    k = ScaleVector(rng.normal(size=N) * np.exp(-(alpha + 0.2) * np.arange(N)))
    return V, OperatorFamily.constant(B), horizon, k, alpha, alpha_prime


def random_ode_model(seed: int, N: int = 48) -> tuple[OdeModel, ScaleVector]:
    """Death rates growing polynomially, dominated birth band, and a
    decaying coupling band."""
    rng = np.random.default_rng(seed)
    d = (np.arange(N) + 1.0) ** 1.2 * rng.uniform(0.8, 1.2, size=N)
    b = band_matrix(N, {1: 0.3 * d[:-1] * rng.uniform(0.5, 1.0, size=N - 1)})
    c = band_matrix(
        N,
        {
            -1: 0.2 * rng.uniform(0.5, 1.0, size=N - 1),
            2: 0.1 * np.exp(-0.15 * np.arange(N - 2)),
        },
    )
    m = OdeModel(DiagonalGenerator(d), b, c, alpha_star=0.0)
    x = ScaleVector(rng.normal(size=N) * np.exp(-1.2 * np.arange(N)))
    return m, x


def decaying_column_model(N: int = 128, decay: float = 0.6) -> tuple[OdeModel, ScaleVector]:
    """Band model with exponentially decaying columns for the truncation
    study: coupling mass above row n falls off like e^(-decay n)."""
    n = np.arange(N)
    d = 1.0 + 0.2 * n
    b = band_matrix(N, {1: 0.3 * np.exp(-decay * n[:-1]) * d[:-1]})
    c = band_matrix(N, {-1: 0.3 * np.exp(-decay * n[:-1]), 2: 0.2 * np.exp(-decay * n[:-2])})
    m = OdeModel(DiagonalGenerator(d), b, c, alpha_star=0.0)
    x = ScaleVector(np.exp(-decay * n) * (1.0 + 0.1 * np.sin(n)))
    return m, x


def invariant_block_model(N: int = 64, N0: int = 12) -> tuple[OdeModel, ScaleVector, int]:
    """Model whose generator leaves span(e_0..e_{N0-1}) invariant (all
    bands vanish across the block boundary), with data inside the block."""
    n = np.arange(N)
    d = 1.0 + 0.1 * n
    up = 0.3 * np.ones(N - 1)
    up[N0 - 1] = 0.0  # no flow out of the block
    dn = 0.2 * np.ones(N - 1)
    dn[N0 - 1] = 0.0  # no flow into the block from above
    c = band_matrix(N, {1: up, -1: dn})
    m = OdeModel(DiagonalGenerator(d), band_matrix(N, {}), c, alpha_star=0.0)
    x_entries = np.zeros(N)
    x_entries[: N0 - 2] = np.exp(-0.5 * np.arange(N0 - 2))
    return m, ScaleVector(x_entries), N0


def random_logistic_params(seed: int, L: int = 16, h: float = 0.25) -> LogisticParams:
    rng = np.random.default_rng(seed)
    a_plus = symmetrize_kernel(0.3 * rng.random(L))
    a_minus = symmetrize_kernel(0.5 * rng.random(L))
    return LogisticParams(
        m=1.0, a_plus=a_plus, a_minus=a_minus, theta=0.8, b=0.2, h=h
    )
