"""Unperturbed evolution systems V(t,s) and their verification.

Two concrete forms are supported, matching everything the applications
need: diagonal semigroups (entrywise e^(-(t-s) d_n), exact contractions)
and truncated-matrix semigroups integrated numerically.  ``residual_A3``
checks the defining integral identities of an evolution system as a
quadrature residual, and ``oracle_propagate`` is the brute-force ODE
oracle every acceptance test compares against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .errors import (
    InvalidInput,
    OracleFailure,
    TimeOrderViolation,
)
from .scale_operator import OperatorMatrix, operator_norm
from .scale_space import ScaleVector, norm_alpha, weights, _as_levels


@dataclass(frozen=True)
class DiagonalGenerator:
    """Death rates d_n >= 0; generates (V(t,s)u)_n = e^(-(t-s) d_n) u_n."""

    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=np.float64)
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise InvalidInput("death rates must be finite and >= 0")
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "d", d)

    def rates(self, D: int) -> np.ndarray:
        """Rates padded with zeros beyond the stored support."""
        if D <= self.d.size:
            return self.d[:D]
        return np.concatenate([self.d, np.zeros(D - self.d.size)])


@dataclass(frozen=True)
class PropagatorSpec:
    """V(t,s) as either a diagonal semigroup or a truncated-matrix
    semigroup, with its uniform norm certificate K_bound."""

    kind: str
    generator: DiagonalGenerator | OperatorMatrix
    K_bound: float = 1.0

    def __post_init__(self):
        if self.kind not in ("diagonal", "truncated_matrix"):
            raise InvalidInput(f"unknown propagator kind {self.kind!r}")
        if self.K_bound < 1.0:
            raise InvalidInput("K_bound must be >= 1")

    def ambient_dim(self) -> int:
        if self.kind == "diagonal":
            return self.generator.d.size
        return max(self.generator.max_row, self.generator.max_col) + 1

    def generator_dense(self, D: int) -> np.ndarray:
        if self.kind == "diagonal":
            return np.diag(-self.generator.rates(D))
        a = self.generator.to_dense(D, D)
        if a.shape != (D, D):
            raise InvalidInput("ambient dimension smaller than generator support")
        return a


class Propagator:
    """Applies e^(tau * generator) on a fixed ambient dimension.

    Matrix exponentials are cached per time step, so grid-based callers
    pay for scipy's expm only once per distinct step size.
    """

    def __init__(self, spec: PropagatorSpec, D: int):
        self.spec = spec
        self.D = D
        self._cache: dict[float, np.ndarray] = {}

    def _factor(self, tau: float) -> np.ndarray:
        m = self._cache.get(tau)
        if m is None:
            if self.spec.kind == "diagonal":
                m = np.exp(-tau * self.spec.generator.rates(self.D))
            else:
                m = expm(tau * self.spec.generator_dense(self.D))
            self._cache[tau] = m
        return m

    def act(self, tau: float, v: np.ndarray) -> np.ndarray:
        if tau == 0.0:
            return v.copy()
        f = self._factor(tau)
        return f * v if self.spec.kind == "diagonal" else f @ v

    def dense(self, tau: float) -> np.ndarray:
        f = self._factor(tau)
        return np.diag(f) if self.spec.kind == "diagonal" else f

    def transposed(self) -> "Propagator":
        if self.spec.kind == "diagonal":
            return self
        spec = PropagatorSpec(
            "truncated_matrix", self.spec.generator.transpose(), self.spec.K_bound
        )
        return Propagator(spec, self.D)


def diag_propagate(g: DiagonalGenerator, s: float, t: float, u: ScaleVector) -> ScaleVector:
    """Entrywise multiplication by e^(-(t-s) d_n); a contraction (K = 1),
    so the tail certificate passes through unchanged."""
    if t < s:
        raise TimeOrderViolation(f"t={t} < s={s}")
    rates = g.rates(u.support_len)
    out = np.exp(-(t - s) * rates) * u.entries
    return ScaleVector(out, tail_alpha=u.tail_alpha, tail_bound=u.tail_bound,
                       levels=u.levels)


def oracle_propagate(
    a: OperatorMatrix,
    N: int,
    s: float,
    t: float,
    u: ScaleVector,
    tol: float = 1e-10,
) -> ScaleVector:
    """Ground-truth solve of du/dt = a u on the N x N truncation using
    adaptive high-order explicit integration (DOP853)."""
    if t < s:
        raise TimeOrderViolation(f"t={t} < s={s}")
    dense = a.to_dense(N, N)[:N, :N]
    u0 = np.zeros(N)
    m = min(N, u.support_len)
    u0[:m] = u.entries[:m]
    if t == s:
        return ScaleVector(u0, tail_alpha=u.tail_alpha, tail_bound=u.tail_bound)
    sol = solve_ivp(
        lambda _, y: dense @ y,
        (s, t),
        u0,
        method="DOP853",
        rtol=tol,
        atol=tol,
        dense_output=False,
    )
    if not sol.success:
        raise OracleFailure(sol.message)
    lv = None if u.levels is None else _as_levels(u.levels, u.support_len)[:N]
    return ScaleVector(sol.y[:, -1], tail_alpha=u.tail_alpha,
                       tail_bound=u.tail_bound, levels=lv)


def sparse_rk4(
    B: OperatorMatrix,
    u0: np.ndarray,
    s: float,
    t: float,
    steps: int,
    record_at: np.ndarray | None = None,
) -> np.ndarray:
    """Fixed-step classical RK4 for du/dt = B u with a deterministic
    column-ordered sparse matvec.

    Invariant subspaces are preserved bitwise: components outside the
    reachable support stay exactly zero regardless of the truncation
    size, which the truncation study relies on.

    Returns the trajectory at ``record_at`` (defaults to the step grid).
    """
    cols = sorted(B.columns)
    col_data = [(k, *B.columns[k]) for k in cols]
    D = u0.size

    def matvec(v: np.ndarray) -> np.ndarray:
        out = np.zeros(D)
        for k, rows, vals in col_data:
            x = v[k]
            if x != 0.0:
                out[rows] += vals * x
        return out

    h = (t - s) / steps
    if record_at is None:
        record_at = np.linspace(s, t, steps + 1)
    rec = np.asarray(record_at)
    idx = np.rint((rec - s) / h).astype(int)
    if not np.allclose(s + idx * h, rec, atol=1e-12 * max(1.0, abs(t - s))):
        raise InvalidInput("record_at must lie on the step grid")
    traj = np.empty((rec.size, D))
    u = u0.astype(np.float64).copy()
    pos = 0
    for j in range(steps + 1):
        while pos < idx.size and idx[pos] == j:
            traj[pos] = u
            pos += 1
        if j == steps:
            break
        k1 = matvec(u)
        k2 = matvec(u + 0.5 * h * k1)
        k3 = matvec(u + 0.5 * h * k2)
        k4 = matvec(u + h * k3)
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return traj


def estimate_K(
    spec: PropagatorSpec,
    alpha_pairs: list[tuple[float, float]],
    taus,
    inflate: float = 1.05,
) -> float:
    """Sample ||V(t,s)||_{alpha alpha'} on a grid and inflate by 5%.

    For diagonal generators the exact value 1 is returned.
    """
    if spec.kind == "diagonal":
        return 1.0
    D = spec.ambient_dim()
    prop = Propagator(spec, D)
    worst = 1.0
    lv_r = getattr(spec.generator, "row_levels", None)
    lv_c = getattr(spec.generator, "col_levels", None)
    for tau in taus:
        dense = prop.dense(float(tau))
        m = OperatorMatrix.from_dense(dense, row_levels=lv_r, col_levels=lv_c)
        for alpha_prime, alpha in alpha_pairs:
            worst = max(worst, operator_norm(m, alpha, alpha_prime))
    return inflate * worst


def residual_A3(
    spec: PropagatorSpec,
    A: "OperatorFamilyLike",
    s: float,
    t: float,
    u: ScaleVector,
    direction: str,
    alpha: float,
    alpha_dprime: float,
    alpha_prime: float,
    panels: int = 64,
) -> float:
    """alpha'-norm of the integral-identity residual of V against its
    generator family A.

    direction 'forward':  V(t,s)u - u - int_s^t A(r) V(r,s)u dr
    direction 'backward': V(t,s)u - u - int_s^t V(t,r) A(r)u dr

    Quadrature is composite Simpson with ``panels`` panels; for smooth
    generators the residual is O(h^4) per unit time.
    """
    if t < s:
        raise TimeOrderViolation(f"t={t} < s={s}")
    if not (alpha_prime < alpha_dprime < alpha):
        raise InvalidInput("need alpha' < alpha'' < alpha")
    if direction not in ("forward", "backward"):
        raise InvalidInput("direction must be 'forward' or 'backward'")
    if t == s:
        return 0.0
    m = panels + (panels % 2)
    h = (t - s) / m
    D = max(u.support_len, spec.ambient_dim(), A.ambient_dim())
    prop = Propagator(spec, D)
    u0 = np.zeros(D)
    u0[: u.support_len] = u.entries

    nodes = s + h * np.arange(m + 1)
    if direction == "forward":
        # f(r) = A(r) V(r,s) u, marched forward along the step grid
        f = np.empty((m + 1, D))
        v = u0.copy()
        for j, r in enumerate(nodes):
            if j > 0:
                v = prop.act(h, v)
            f[j] = A.dense_at(float(r), D, D) @ v
    else:
        # f(r) = V(t,r) A(r) u, propagated to the final time
        f = np.empty((m + 1, D))
        for j, r in enumerate(nodes):
            x = A.dense_at(float(r), D, D) @ u0
            for _ in range(m - j):
                x = prop.act(h, x)
            f[j] = x
    wsimp = np.ones(m + 1)
    wsimp[1:-1:2] = 4.0
    wsimp[2:-1:2] = 2.0
    integral = (h / 3.0) * (wsimp[:, None] * f).sum(axis=0)
    vts = prop.act(t - s, u0)
    resid = vts - u0 - integral
    lv = u.levels if u.levels is not None else None
    res_vec = ScaleVector(resid, levels=None if lv is None else _as_levels(lv, D))
    return norm_alpha(res_vec, alpha_prime)


class OperatorFamilyLike:
    """Protocol stub: anything with dense_at(t, nrows, ncols) and
    ambient_dim(); see scale_operator.OperatorFamily."""
