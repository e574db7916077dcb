"""Discretized birth-and-death hierarchy of a spatial logistic model.

Particles live on a periodic one-dimensional grid of L cells with spacing
h.  A particle at x dies at rate m plus competition sum a_minus(x-y) over
other particles y, and branches at rate a_plus(x-y) into cell y.  The
quasi-observable hierarchy G = (G^(n))_n evolves under the operator
Lhat = Lhat0 + Lhat1 obtained by conjugating the Markov generator with
the combinatorial transform (KG)(gamma) = sum over finite subsets; the
correlation hierarchy k evolves under the adjoint L_Delta.

All integrals become h-weighted sums; tensors over grid^n carry the
Lebesgue-Poisson weight h^n/n! in every norm and pairing.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    ClosureUnsound,
    InvalidInput,
    InvalidScalePair,
    TruncationUnsoundWarning,
)
from .evolution_core import DiagonalGenerator, PropagatorSpec, estimate_K
from .ovcyannikov import (
    EvolutionResult,
    EvolveOptions,
    HorizonTable,
    WConfig,
    dual_evolve,
    forward_evolve,
)
from .scale_operator import OperatorFamily, OperatorMatrix, fit_majorant
from .scale_space import DualVector, ScaleVector

_E = math.e


def symmetrize_kernel(a: np.ndarray) -> np.ndarray:
    """Average a(x) with a(-x) on the periodic grid; the result satisfies
    a[j] == a[(L-j) % L] bitwise (commutative addition on both sides)."""
    a = np.asarray(a, dtype=np.float64)
    return 0.5 * (a + np.roll(a[::-1], 1))


@dataclass(frozen=True)
class LogisticParams:
    """Mortality m, competition kernel a_minus, dispersal kernel a_plus
    (per-cell samples on the periodic grid), stability constants theta
    and b, grid spacing h."""

    m: float
    a_plus: np.ndarray
    a_minus: np.ndarray
    theta: float
    b: float = 0.0
    h: float = 1.0

    def __post_init__(self):
        if self.m < 0 or self.b < 0 or self.theta <= 0 or self.h <= 0:
            raise InvalidInput("need m >= 0, b >= 0, theta > 0, h > 0")
        for name in ("a_plus", "a_minus"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if a.ndim != 1 or np.any(a < 0) or not np.all(np.isfinite(a)):
                raise InvalidInput(f"{name} must be a nonnegative 1-d kernel")
            sym = symmetrize_kernel(a)
            if not np.array_equal(a, sym):
                raise InvalidInput(
                    f"{name} must be exactly symmetric; use symmetrize_kernel"
                )
            a = a.copy()
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        if self.a_plus.size != self.a_minus.size:
            raise InvalidInput("kernels must share the grid size")

    @property
    def L(self) -> int:
        return int(self.a_plus.size)

    @property
    def alpha_star(self) -> float:
        return math.log(self.theta)

    def kernel_sup(self, which: str) -> float:
        a = self.a_plus if which == "+" else self.a_minus
        return float(a.max())

    def kernel_l1(self, which: str) -> float:
        a = self.a_plus if which == "+" else self.a_minus
        return self.h * float(a.sum())


def kernel_matrix(a: np.ndarray) -> np.ndarray:
    """P[x, y] = a[(x - y) mod L]."""
    L = a.size
    idx = (np.arange(L)[:, None] - np.arange(L)[None, :]) % L
    return a[idx]


@dataclass(frozen=True)
class Hierarchy:
    """Components comp[n] on grid^n for n = 0..N_max (comp[0] scalar).

    kind 'quasiobservable' components pair against 'correlation' ones via
    <G, k> = sum_n (h^n/n!) sum_tuples G^(n) k^(n).
    """

    comps: tuple
    kind: str
    h: float = 1.0

    def __post_init__(self):
        if self.kind not in ("quasiobservable", "correlation"):
            raise InvalidInput(f"unknown hierarchy kind {self.kind!r}")
        if not self.comps:
            raise InvalidInput("hierarchy needs at least the n=0 component")
        L = None
        frozen = []
        for n, c in enumerate(self.comps):
            c = np.asarray(c, dtype=np.float64)
            if c.ndim != n:
                raise InvalidInput(f"component {n} must have {n} axes")
            if not np.all(np.isfinite(c)):
                raise InvalidInput("components must be finite")
            if n >= 1:
                if L is None:
                    L = c.shape[0]
                if c.shape != (L,) * n:
                    raise InvalidInput("components must share the grid size")
            c = c.copy()
            c.flags.writeable = False
            frozen.append(c)
        object.__setattr__(self, "comps", tuple(frozen))

    @property
    def N_max(self) -> int:
        return len(self.comps) - 1

    @property
    def L(self) -> int:
        return self.comps[1].shape[0] if len(self.comps) > 1 else 0

    def value(self, eta) -> float:
        """Evaluate at a configuration given as a tuple of cell indices."""
        eta = tuple(eta)
        if len(eta) > self.N_max:
            return 0.0
        return float(self.comps[len(eta)][eta])

    def zeros_like(self) -> list:
        return [np.zeros_like(c) for c in self.comps]


def symmetrize_component(c: np.ndarray) -> np.ndarray:
    """Average over all axis permutations."""
    n = c.ndim
    if n < 2:
        return np.asarray(c, dtype=np.float64)
    acc = np.zeros_like(c, dtype=np.float64)
    perms = list(itertools.permutations(range(n)))
    for p in perms:
        acc += np.transpose(c, p)
    return acc / len(perms)


def random_hierarchy(
    rng: np.random.Generator,
    L: int,
    N_max: int,
    kind: str = "quasiobservable",
    top_level: int | None = None,
    h: float = 1.0,
) -> Hierarchy:
    """Random permutation-symmetric hierarchy, zero above top_level."""
    top = N_max if top_level is None else top_level
    comps = []
    for n in range(N_max + 1):
        if n > top:
            comps.append(np.zeros((L,) * n))
        else:
            comps.append(symmetrize_component(rng.normal(size=(L,) * n)))
    return Hierarchy(tuple(comps), kind=kind, h=h)


def lp_integral(G: Hierarchy, alpha: float = 0.0) -> float:
    """sum_n (h^n/n!) e^(alpha n) sum_tuples G^(n); the discrete
    Lebesgue-Poisson integral of G e^(alpha |.|)."""
    total = []
    for n, c in enumerate(G.comps):
        total.append(G.h**n / math.factorial(n) * math.exp(alpha * n) * float(c.sum()))
    return math.fsum(total)


def hierarchy_norm(G: Hierarchy, alpha: float) -> float:
    """The weighted-l1 hierarchy norm sum_n (h^n/n!) e^(alpha n) sum |G^(n)|."""
    total = []
    for n, c in enumerate(G.comps):
        total.append(
            G.h**n / math.factorial(n) * math.exp(alpha * n)
            * float(np.abs(c).sum())
        )
    return math.fsum(total)


def correlation_norm(k: Hierarchy, alpha: float) -> float:
    """sup_n e^(-alpha n) max |k^(n)|, the dual hierarchy norm."""
    return max(
        math.exp(-alpha * n) * float(np.abs(c).max()) if c.size else 0.0
        for n, c in enumerate(k.comps)
    )


def hierarchy_pairing(G: Hierarchy, k: Hierarchy) -> float:
    """<G, k> = sum_n (h^n/n!) sum_tuples G^(n) k^(n)."""
    if G.N_max != k.N_max:
        raise InvalidInput("hierarchies must share N_max")
    parts = [
        G.h**n / math.factorial(n) * float(np.sum(g * c))
        for n, (g, c) in enumerate(zip(G.comps, k.comps))
    ]
    return math.fsum(parts)


def k_transform(G: Hierarchy, gamma) -> float:
    """(KG)(gamma) = sum over subsets eta of gamma of G(eta)."""
    gamma = tuple(gamma)
    if len(gamma) > G.N_max and np.any(G.comps[G.N_max] != 0):
        warnings.warn(
            "configuration larger than N_max with nonzero top level: "
            "subset sum is truncated",
            TruncationUnsoundWarning,
        )
    total = 0.0
    for r in range(0, min(len(gamma), G.N_max) + 1):
        for sub in itertools.combinations(gamma, r):
            total += G.value(sub)
    return total


def k_inverse(F, eta) -> float:
    """(K^,-1 F)(eta) = sum over subsets xi of eta of (-1)^(|eta|-|xi|) F(xi).

    F may be a callable on index tuples or a Hierarchy paired with its
    own k_transform.
    """
    eta = tuple(eta)
    if isinstance(F, Hierarchy):
        fn = lambda xi: k_transform(F, xi)
    else:
        fn = F
    total = 0.0
    for r in range(len(eta) + 1):
        sign = (-1.0) ** (len(eta) - r)
        for sub in itertools.combinations(eta, r):
            total += sign * fn(sub)
    return total


@dataclass(frozen=True)
class GReport:
    """Sampled check of the stability inequality
    sum_{x in eta} sum_{y != x} (a_minus - theta a_plus)(x-y) >= -b |eta|."""

    min_margin: float
    worst_eta: tuple
    passed: bool
    pairwise_min: float
    pairwise_ok: bool
    n_samples: int
    n_max: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "min_margin": self.min_margin,
            "worst_eta": list(self.worst_eta),
            "passed": self.passed,
            "pairwise_min": self.pairwise_min,
            "pairwise_ok": self.pairwise_ok,
            "n_samples": self.n_samples,
            "n_max": self.n_max,
            "seed": self.seed,
        }


def check_G(
    p: LogisticParams,
    n_max: int = 5,
    n_samples: int = 500,
    seed: int = 0,
) -> GReport:
    """Sample configurations up to n_max points and report the minimal
    margin of the stability inequality, plus the exhaustive pair check
    a_minus(x) >= theta a_plus(x) - b (necessary for |eta| = 2)."""
    rng = np.random.default_rng(seed)
    diff = kernel_matrix(p.a_minus) - p.theta * kernel_matrix(p.a_plus)
    L = p.L
    min_margin = math.inf
    worst = ()
    # exhaustive |eta| = 2 over displacement classes
    for dx in range(L):
        eta = (0, dx) if dx != 0 else (0,)
        if len(eta) < 2:
            continue
        val = 2.0 * diff[0, dx] + p.b * 2
        if val < min_margin:
            min_margin, worst = val, eta
    for _ in range(n_samples):
        n = int(rng.integers(1, n_max + 1))
        eta = tuple(int(v) for v in rng.choice(L, size=min(n, L), replace=False))
        s = 0.0
        for i, x in enumerate(eta):
            for j, y in enumerate(eta):
                if i != j:
                    s += diff[x, y]
        val = s + p.b * len(eta)
        if val < min_margin:
            min_margin, worst = val, eta
    pair_margin = float((p.a_minus - p.theta * p.a_plus + p.b).min())
    return GReport(
        min_margin=float(min_margin),
        worst_eta=worst,
        passed=min_margin >= -1e-12,
        pairwise_min=pair_margin,
        pairwise_ok=pair_margin >= -1e-12,
        n_samples=n_samples,
        n_max=n_max,
        seed=seed,
    )


def continuum_bounds(
    p: LogisticParams, alpha: float, alpha_prime: float
) -> tuple[float, float]:
    """Scale-norm bounds with discrete kernel norms:
    ||Lhat0|| <= m/(e gap) + (sup a_minus + sup a_plus)/(4 e^2 gap^2),
    ||Lhat1|| <= (|a_minus|_L1 e^alpha + |a_plus|_L1)/(e gap)."""
    if alpha_prime >= alpha:
        raise InvalidScalePair(f"{alpha_prime} >= {alpha}")
    gap = alpha - alpha_prime
    b0 = p.m / (_E * gap) + (
        p.kernel_sup("-") + p.kernel_sup("+")
    ) / (4.0 * _E**2 * gap**2)
    b1 = (p.kernel_l1("-") * math.exp(alpha) + p.kernel_l1("+")) / (_E * gap)
    return float(b0), float(b1)


def _pair_sum(P: np.ndarray, n: int) -> np.ndarray:
    """S(x_1..x_n) = sum over ordered pairs i != j of P[x_i, x_j].

    Requires P symmetric (guaranteed for symmetrized kernels); the
    reshape trick places P's first axis at min(i, j).
    """
    L = P.shape[0]
    S = np.zeros((L,) * n)
    for i in range(n):
        for j in range(n):
            if i != j:
                S = S + P.reshape(tuple(L if ax in (i, j) else 1 for ax in range(n)))
    return S


def _contract_raise(g_up: np.ndarray, P: np.ndarray, i: int, h: float) -> np.ndarray:
    """h * sum_y P[x_i, y] g_up(x_1..x_n, y) for a fixed slot i."""
    n = g_up.ndim - 1
    labels_g = list(range(n)) + [n]
    labels_P = [i, n]
    out = list(range(n))
    return h * np.einsum(g_up, labels_g, P, labels_P, out)


def _contract_replace(g: np.ndarray, P: np.ndarray, i: int, h: float) -> np.ndarray:
    """h * sum_y P[x_i, y] g(x_1..y..x_n) with slot i replaced by y."""
    n = g.ndim
    labels_g = [n if ax == i else ax for ax in range(n)]
    labels_P = [i, n]
    out = list(range(n))
    return h * np.einsum(g, labels_g, P, labels_P, out)


def _lower_with_pair_kernel(
    g_low: np.ndarray, P: np.ndarray, n: int
) -> np.ndarray:
    """sum_i sum_{j != i} P[x_i, x_j] g_low(x with slot i removed)."""
    L = P.shape[0]
    out = np.zeros((L,) * n)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            pk = P.reshape(tuple(L if ax in (i, j) else 1 for ax in range(n)))
            ge = np.expand_dims(g_low, axis=i)
            out = out + pk * ge
    return out


class HierarchyOperator:
    """Linear map between hierarchies, built from per-level tensor rules.

    apply() returns (result, defect): the defect is zero whenever every
    term the exact operator needs is representable below N_max; otherwise
    it is a heuristic magnitude indicator (coefficient mass times the
    norm of the nearest stored level) of what the hard truncation drops.
    """

    def __init__(self, p: LogisticParams, which: str, b_shift: float = 0.0):
        if which not in ("Lhat0", "Lhat1", "Ldelta0", "Ldelta1"):
            raise InvalidInput(f"unknown operator {which!r}")
        self.p = p
        self.which = which
        self.b_shift = b_shift  # adds b_shift * n * identity at level n
        self.Pp = kernel_matrix(p.a_plus)
        self.Pm = kernel_matrix(p.a_minus)

    def expected_kind(self) -> str:
        return "quasiobservable" if self.which.startswith("Lhat") else "correlation"

    def apply(self, H: Hierarchy) -> tuple[Hierarchy, float]:
        if H.kind != self.expected_kind():
            raise InvalidInput(
                f"{self.which} acts on {self.expected_kind()} hierarchies"
            )
        p, h = self.p, self.p.h
        N = H.N_max
        out = H.zeros_like()
        defect = 0.0
        for n in range(N + 1):
            g = H.comps[n]
            if self.which == "Lhat0":
                if n >= 1:
                    diag = p.m * n + _pair_sum(self.Pm, n)
                    out[n] = out[n] - diag * g
                # raising-argument term sum_i h sum_y a+(x_i-y) G(eta u y)
                if n < N:
                    g_up = H.comps[n + 1]
                    for i in range(n):
                        out[n] = out[n] + _contract_raise(g_up, self.Pp, i, h)
                elif n >= 1:
                    # needs level N+1: dropped, heuristic defect indicator
                    top = float(np.abs(H.comps[N]).sum()) * h**N / math.factorial(N)
                    defect += n * p.kernel_l1("+") * top
            elif self.which == "Lhat1":
                if n >= 1:
                    out[n] = out[n] - _lower_with_pair_kernel(
                        H.comps[n - 1], self.Pm, n
                    )
                    for i in range(n):
                        out[n] = out[n] + _contract_replace(g, self.Pp, i, h)
            elif self.which == "Ldelta0":
                if n >= 1:
                    diag = p.m * n + _pair_sum(self.Pm, n)
                    out[n] = out[n] - diag * g
                    out[n] = out[n] + _lower_with_pair_kernel(
                        H.comps[n - 1], self.Pp, n
                    )
                # the adjoint raising term k^(n) -> level n+1 output
                if n == N:
                    # output at N+1 not representable: computable defect
                    if n >= 0:
                        dropped = _ldelta0_raise_out(H.comps[N], self.Pp, N)
                        defect += (
                            h ** (N + 1) / math.factorial(N + 1)
                            * float(np.abs(dropped).sum())
                        )
            elif self.which == "Ldelta1":
                if n < N:
                    k_up = H.comps[n + 1]
                    for i in range(n):
                        out[n] = out[n] - _contract_raise(k_up, self.Pm, i, h)
                elif n == N and n >= 1:
                    top = float(np.abs(H.comps[N]).max())
                    defect += n * p.kernel_l1("-") * top
                if n >= 1:
                    for i in range(n):
                        out[n] = out[n] + _contract_replace(g, self.Pp, i, h)
            if self.b_shift != 0.0 and n >= 1:
                out[n] = out[n] + self.b_shift * n * g
        return Hierarchy(tuple(out), kind=H.kind, h=H.h), float(defect)


def _ldelta0_raise_out(k_top: np.ndarray, Pp: np.ndarray, N: int) -> np.ndarray:
    """Level-(N+1) output of the adjoint raising term
    sum_i sum_{j != i} a+(z_i - z_j) k(z without i), from k^(N)."""
    return _lower_with_pair_kernel(k_top, Pp, N + 1)


def build_discrete_operators(
    p: LogisticParams, N_max: int
) -> tuple[HierarchyOperator, HierarchyOperator, HierarchyOperator, HierarchyOperator]:
    """(Lhat0, Lhat1, Ldelta0, Ldelta1) acting on hierarchies truncated at
    N_max (the truncation is carried by the Hierarchy argument)."""
    del N_max  # truncation lives on the hierarchy; kept for call-site clarity
    return (
        HierarchyOperator(p, "Lhat0"),
        HierarchyOperator(p, "Lhat1"),
        HierarchyOperator(p, "Ldelta0"),
        HierarchyOperator(p, "Ldelta1"),
    )


# ---------------------------------------------------------------------------
# Flattening onto the sequence scale


def _block_slices(L: int, N_max: int) -> list[slice]:
    sizes = [L**n for n in range(N_max + 1)]
    offs = np.cumsum([0] + sizes)
    return [slice(int(offs[n]), int(offs[n + 1])) for n in range(N_max + 1)]


def flatten_hierarchy(H: Hierarchy) -> ScaleVector | DualVector:
    """Quasi-observables flatten with the Lebesgue-Poisson weight h^n/n!
    folded into the entries, so the level-weighted l1 norm equals the
    hierarchy norm; correlation hierarchies flatten unweighted so that
    the euclidean dot product of the two flats is the pairing."""
    L, N = H.L, H.N_max
    sl = _block_slices(L, N)
    dim = sl[-1].stop
    flat = np.zeros(dim)
    levels = np.zeros(dim)
    for n in range(N + 1):
        scale = H.h**n / math.factorial(n) if H.kind == "quasiobservable" else 1.0
        flat[sl[n]] = scale * H.comps[n].reshape(-1)
        levels[sl[n]] = n
    if H.kind == "quasiobservable":
        return ScaleVector(flat, levels=levels)
    return DualVector(flat, levels=levels)


def unflatten_hierarchy(
    flat: np.ndarray, L: int, N_max: int, kind: str, h: float
) -> Hierarchy:
    sl = _block_slices(L, N_max)
    comps = []
    for n in range(N_max + 1):
        scale = h**n / math.factorial(n) if kind == "quasiobservable" else 1.0
        comps.append(np.asarray(flat[sl[n]]).reshape((L,) * n) / scale)
    return Hierarchy(tuple(comps), kind=kind, h=h)


def flatten_operator(
    op: HierarchyOperator, L: int, N_max: int
) -> tuple[OperatorMatrix, float]:
    """Matrix of the operator in its own flattened coordinates, built by
    direct column evaluation on basis hierarchies.  Returns the matrix
    and the worst per-column closure defect."""
    sl = _block_slices(L, N_max)
    dim = sl[-1].stop
    kind = op.expected_kind()
    h = op.p.h
    dense = np.zeros((dim, dim))
    worst_defect = 0.0
    col = 0
    for n in range(N_max + 1):
        scale = h**n / math.factorial(n) if kind == "quasiobservable" else 1.0
        for idx in range(L**n):
            basis = [np.zeros((L,) * q) for q in range(N_max + 1)]
            basis[n].reshape(-1)[idx] = 1.0 / scale
            Hb = Hierarchy(tuple(basis), kind=kind, h=h)
            out, defect = op.apply(Hb)
            worst_defect = max(worst_defect, defect)
            fl = flatten_hierarchy(out)
            dense[:, col] = fl.entries
            col += 1
    levels = flatten_hierarchy(
        Hierarchy(
            tuple(np.zeros((L,) * q) for q in range(N_max + 1)), kind=kind, h=h
        )
    ).level_array()
    mat = OperatorMatrix.from_dense(dense, row_levels=levels, col_levels=levels)
    return mat, worst_defect


def stacked_generator(p: LogisticParams, L: int, N_max: int) -> np.ndarray:
    """Dense generator of the full flattened quasi-observable hierarchy,
    d/dt flat(G) = (Lhat0 + Lhat1) flat(G); the oracle target."""
    m0, _ = flatten_operator(HierarchyOperator(p, "Lhat0"), L, N_max)
    m1, _ = flatten_operator(HierarchyOperator(p, "Lhat1"), L, N_max)
    dim = _block_slices(L, N_max)[-1].stop
    return m0.to_dense(dim, dim) + m1.to_dense(dim, dim)


# ---------------------------------------------------------------------------
# Evolution


def _hierarchy_horizon(
    p: LogisticParams,
    B_flat: OperatorMatrix,
    alpha: float,
    alpha_prime: float,
    K: float,
) -> HorizonTable:
    a_star = p.alpha_star
    if alpha_prime <= a_star:
        raise InvalidScalePair(
            f"alpha_prime must exceed ln(theta) = {a_star}, got {alpha_prime}"
        )
    grid = np.linspace(
        a_star + 0.25 * (alpha_prime - a_star), alpha + 0.5, 10
    )
    M = fit_majorant(B_flat, a_star, grid)
    return HorizonTable(alpha_star=a_star, K=K, M=M)


def evolve_hierarchy(
    p: LogisticParams,
    H0: Hierarchy,
    t: float,
    alpha: float,
    alpha_prime: float,
    opts: EvolveOptions = EvolveOptions(),
    defect_tol: float = math.inf,
) -> tuple[Hierarchy, EvolutionResult]:
    """Evolve a hierarchy over [0, t] through the perturbation series.

    Quasi-observables run forward with V from Lhat0 - b|eta| and the
    perturbation Lhat1 + b|eta|; correlation hierarchies run the adjoint
    problem on the same flattened system.  Requires alpha' > ln(theta).
    """
    L, N = H0.L, H0.N_max
    if L == 0:
        raise InvalidInput("hierarchy must carry at least one grid level")
    if H0.h != p.h:
        raise InvalidInput("hierarchy and parameters disagree on spacing h")
    A0 = HierarchyOperator(p, "Lhat0", b_shift=-p.b)
    B1 = HierarchyOperator(p, "Lhat1", b_shift=+p.b)
    A_flat, defect_A = flatten_operator(A0, L, N)
    B_flat, defect_B = flatten_operator(B1, L, N)
    defect = max(defect_A, defect_B)
    if defect > defect_tol:
        raise ClosureUnsound(
            f"closure defect {defect} exceeds tolerance {defect_tol}"
        )
    dim = _block_slices(L, N)[-1].stop

    if np.all(p.a_plus == 0.0):
        # Lhat0 - b|eta| is diagonal: exact scalar exponentials
        diag = -np.diag(A_flat.to_dense(dim, dim))
        V = PropagatorSpec(
            kind="diagonal", generator=DiagonalGenerator(diag), K_bound=1.0
        )
        K = 1.0
    else:
        V = PropagatorSpec(kind="truncated_matrix", generator=A_flat, K_bound=1.0)
        K_meas = estimate_K(
            V, [(alpha_prime, alpha)], [0.25 * t, 0.5 * t, t] if t > 0 else [0.0],
            inflate=1.0,
        )
        K = max(1.0, 1.01 * K_meas)
        V = PropagatorSpec(kind="truncated_matrix", generator=A_flat, K_bound=K)
    horizon = _hierarchy_horizon(p, B_flat, alpha, alpha_prime, K)
    fam = OperatorFamily.constant(B_flat)

    if H0.kind == "quasiobservable":
        flat0 = flatten_hierarchy(H0)
        res = forward_evolve(
            V, fam, flat0, 0.0, t, alpha, alpha_prime, opts, horizon
        )
        out = unflatten_hierarchy(
            res.value.entries, L, N, "quasiobservable", p.h
        )
    else:
        l0 = flatten_hierarchy(H0)
        cfg = WConfig(V=V, B=fam, horizon=horizon)
        res = dual_evolve(cfg, l0, 0.0, t, alpha, alpha_prime, opts)
        out = unflatten_hierarchy(res.value.entries, L, N, "correlation", p.h)
    return out, res
