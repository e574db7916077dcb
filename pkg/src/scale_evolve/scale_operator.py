"""Column-sparse operators in the scale and their weighted operator norms.

An operator B acts by (Bu)_n = sum_k b_nk u_k.  Between E_alpha and
E_alpha' its exact norm is sup_k e^(-alpha*k) sum_n |b_nk| e^(alpha'*n);
for column-finite matrices the supremum is a max over stored columns.
Columns beyond max_col are implicitly zero.

``fit_majorant`` manufactures a certified surrogate for the loss-of-
regularity bound ||B||_{alpha alpha'} <= M(alpha) / (alpha - alpha') from
a finite alpha-grid plus a safety factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, InvalidScalePair
from .scale_space import ScaleVector, weights, _as_levels


class OperatorMatrix:
    """Immutable column-sparse matrix b_nk with strictly increasing rows.

    Optional row/col level arrays reweight the norm exponents the same
    way ScaleVector levels do.
    """

    def __init__(
        self,
        columns: dict[int, tuple[np.ndarray, np.ndarray]],
        max_col: int | None = None,
        row_levels: np.ndarray | None = None,
        col_levels: np.ndarray | None = None,
        bandwidth: int | None = None,
    ):
        cols: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for k, (rows, vals) in columns.items():
            rows = np.asarray(rows, dtype=np.intp)
            vals = np.asarray(vals, dtype=np.float64)
            if rows.shape != vals.shape:
                raise InvalidInput("rows and values must have equal length")
            if not np.all(np.isfinite(vals)):
                raise InvalidInput("matrix entries must be finite")
            order = np.argsort(rows, kind="stable")
            rows, vals = rows[order], vals[order]
            if rows.size and np.any(np.diff(rows) == 0):
                raise InvalidInput(f"duplicate row index in column {k}")
            keep = vals != 0.0
            rows, vals = rows[keep], vals[keep]
            if rows.size:
                rows.flags.writeable = False
                vals.flags.writeable = False
                cols[int(k)] = (rows, vals)
        self.columns = cols
        self.max_col = max(cols.keys(), default=-1) if max_col is None else max_col
        self.row_levels = row_levels
        self.col_levels = col_levels
        self.bandwidth = bandwidth

    @property
    def max_row(self) -> int:
        return max((int(r[-1]) for r, _ in self.columns.values()), default=-1)

    @classmethod
    def from_coo(cls, triples, **kw) -> "OperatorMatrix":
        """Build from an iterable of (row n, col k, value)."""
        by_col: dict[int, list[tuple[int, float]]] = {}
        for n, k, v in triples:
            by_col.setdefault(int(k), []).append((int(n), float(v)))
        cols = {}
        for k, items in by_col.items():
            agg: dict[int, float] = {}
            for n, v in items:
                agg[n] = agg.get(n, 0.0) + v
            rows = np.array(sorted(agg), dtype=np.intp)
            vals = np.array([agg[n] for n in sorted(agg)])
            cols[k] = (rows, vals)
        return cls(cols, **kw)

    @classmethod
    def from_dense(cls, a: np.ndarray, **kw) -> "OperatorMatrix":
        a = np.asarray(a, dtype=np.float64)
        cols = {}
        for k in range(a.shape[1]):
            rows = np.nonzero(a[:, k])[0]
            if rows.size:
                cols[k] = (rows, a[rows, k])
        return cls(cols, max_col=a.shape[1] - 1, **kw)

    def to_dense(self, nrows: int | None = None, ncols: int | None = None) -> np.ndarray:
        nr = max(self.max_row + 1, nrows or 0)
        nc = max(self.max_col + 1, ncols or 0)
        a = np.zeros((nr, nc))
        for k, (rows, vals) in self.columns.items():
            a[rows, k] = vals
        return a

    def transpose(self) -> "OperatorMatrix":
        triples = [
            (k, int(n), float(v))
            for k, (rows, vals) in self.columns.items()
            for n, v in zip(rows, vals)
        ]
        return OperatorMatrix.from_coo(
            triples, row_levels=self.col_levels, col_levels=self.row_levels
        )

    def scaled(self, c: float) -> "OperatorMatrix":
        return OperatorMatrix(
            {k: (r, v * c) for k, (r, v) in self.columns.items()},
            max_col=self.max_col,
            row_levels=self.row_levels,
            col_levels=self.col_levels,
        )

    def plus(self, other: "OperatorMatrix") -> "OperatorMatrix":
        triples = [
            (int(n), k, float(v))
            for m in (self, other)
            for k, (rows, vals) in m.columns.items()
            for n, v in zip(rows, vals)
        ]
        return OperatorMatrix.from_coo(
            triples, row_levels=self.row_levels, col_levels=self.col_levels
        )


def identity_matrix(n: int) -> OperatorMatrix:
    return diagonal_matrix(np.ones(n))


def diagonal_matrix(values) -> OperatorMatrix:
    values = np.asarray(values, dtype=np.float64)
    return OperatorMatrix(
        {k: (np.array([k]), np.array([values[k]])) for k in range(values.size)},
        max_col=values.size - 1,
    )


def shift_matrix(n: int, offset: int, value: float = 1.0) -> OperatorMatrix:
    """b_{k+offset, k} = value; offset -1 is the left shift, +1 raising."""
    cols = {}
    for k in range(n):
        r = k + offset
        if 0 <= r < n:
            cols[k] = (np.array([r]), np.array([value]))
    return OperatorMatrix(cols, max_col=n - 1)


def band_matrix(n: int, bands: dict[int, np.ndarray]) -> OperatorMatrix:
    """bands maps offset -> per-column values: b_{k+offset,k} = bands[offset][k]."""
    triples = []
    for off, vals in bands.items():
        vals = np.asarray(vals, dtype=np.float64)
        for k in range(n):
            r = k + off
            if 0 <= r < n and k < vals.size and vals[k] != 0.0:
                triples.append((r, k, float(vals[k])))
    m = OperatorMatrix.from_coo(triples)
    m.max_col = n - 1
    m.bandwidth = max((abs(o) for o in bands), default=0)
    return m


def apply(B: OperatorMatrix, u: ScaleVector, tail_factor: float | None = None) -> ScaleVector:
    """Exact column combination (Bu)_n = sum_k b_nk u_k.

    Missing columns act as zero.  The input tail certificate is propagated
    multiplied by ``tail_factor`` (defaults to the same-alpha column norm
    cap of B at u.tail_alpha).
    """
    D = max(u.support_len, B.max_row + 1)
    out = np.zeros(D)
    for k in sorted(B.columns):
        if k < u.support_len and u.entries[k] != 0.0:
            rows, vals = B.columns[k]
            out[rows] += vals * u.entries[k]
    tail = 0.0
    if u.tail_bound > 0.0:
        if tail_factor is None:
            tail_factor = column_norm_cap(B, u.tail_alpha)
        tail = u.tail_bound * tail_factor
    out_levels = None
    if u.levels is not None or B.row_levels is not None:
        lv = _as_levels(B.row_levels, D)
        out_levels = lv[:D]
    return ScaleVector(out, tail_alpha=u.tail_alpha, tail_bound=tail, levels=out_levels)


def column_norm_cap(B: OperatorMatrix, alpha: float) -> float:
    """sup_k e^(-alpha*k) sum_n |b_nk| e^(alpha*n): the same-alpha cap."""
    return _col_sup(B, alpha, alpha)


def _col_sup(B: OperatorMatrix, alpha: float, alpha_prime: float) -> float:
    best = 0.0
    n_rows = B.max_row + 1
    n_cols = B.max_col + 1
    row_lv = _as_levels(B.row_levels, n_rows)
    col_lv = _as_levels(B.col_levels, n_cols)
    for k, (rows, vals) in B.columns.items():
        w = weights(alpha_prime, row_lv[rows])
        s = math.fsum(np.abs(vals) * w) * math.exp(-alpha * col_lv[k])
        if s > best:
            best = s
    return best


def operator_norm(B: OperatorMatrix, alpha: float, alpha_prime: float) -> float:
    """Exact ||B||_{L(E_alpha, E_alpha')} for a column-finite matrix."""
    if alpha_prime >= alpha:
        raise InvalidScalePair(f"need alpha_prime < alpha, got {alpha_prime} >= {alpha}")
    return _col_sup(B, alpha, alpha_prime)


@dataclass(frozen=True)
class MajorantM:
    """Certified surrogate for the increasing function M of the bound
    ||B||_{alpha alpha'} <= M(alpha)/(alpha - alpha').

    Knots hold raw fitted values (nondecreasing); evaluation linearly
    interpolates and multiplies by the safety factor.
    """

    alpha_star: float
    knots: tuple[tuple[float, float], ...]
    safety: float = 1.1

    def __post_init__(self):
        if self.safety < 1.0:
            raise InvalidInput("safety must be >= 1")
        a = [k[0] for k in self.knots]
        m = [k[1] for k in self.knots]
        if any(x2 <= x1 for x1, x2 in zip(a, a[1:])):
            raise InvalidInput("knot alphas must be strictly increasing")
        if any(y2 < y1 for y1, y2 in zip(m, m[1:])) or any(y < 0 for y in m):
            raise InvalidInput("knot values must be nonnegative nondecreasing")

    def __call__(self, alpha: float) -> float:
        if not self.knots:
            return 0.0
        a = np.array([k[0] for k in self.knots])
        m = np.array([k[1] for k in self.knots])
        # clamp outside the grid: constant extension is conservative below,
        # and matches the bounded-M use above the last knot
        return self.safety * float(np.interp(alpha, a, m))

    @property
    def sup_value(self) -> float:
        return self.safety * max((m for _, m in self.knots), default=0.0)

    def is_zero(self) -> bool:
        return all(m == 0.0 for _, m in self.knots)


def fit_majorant(
    B: OperatorMatrix,
    alpha_star: float,
    alpha_grid,
    safety: float = 1.1,
) -> MajorantM:
    """Fit M on a grid so that ||B||_{alpha alpha'} <= M(alpha)/(alpha -
    alpha') for every alpha' in [alpha_star, alpha), made monotone by a
    cumulative max.

    Per column k the needed supremum over alpha' is bounded by the sum of
    per-entry suprema: sup (alpha - alpha') e^(alpha' n) has the closed
    form e^(alpha n - 1)/n when the stationary point alpha - 1/n lies
    above alpha_star, and (alpha - alpha_star) e^(alpha_star n) otherwise,
    so the fitted value is a certificate rather than a sample.
    """
    grid = sorted(float(a) for a in alpha_grid)
    if not grid:
        raise InvalidInput("alpha_grid must be nonempty")
    if grid[0] <= alpha_star:
        raise InvalidInput("alpha_grid must lie strictly above alpha_star")

    def term_sup(alpha: float, n: float) -> float:
        if n <= 0.0:
            return (alpha - alpha_star) * math.exp(alpha_star * n)
        if alpha - 1.0 / n >= alpha_star:
            return math.exp(alpha * n - 1.0) / n
        return (alpha - alpha_star) * math.exp(alpha_star * n)

    knots = []
    running = 0.0
    for alpha in grid:
        m = 0.0
        for k, (rows, vals) in B.columns.items():
            row_lv = (rows.astype(np.float64) if B.row_levels is None
                      else np.asarray(B.row_levels, dtype=np.float64)[rows])
            col_lv = (float(k) if B.col_levels is None
                      else float(np.asarray(B.col_levels)[k]))
            col = math.fsum(
                abs(v) * term_sup(alpha, n) for v, n in zip(vals, row_lv)
            )
            m = max(m, math.exp(-alpha * col_lv) * col)
        running = max(running, m)
        knots.append((alpha, running))
    return MajorantM(alpha_star=alpha_star, knots=tuple(knots), safety=safety)


class OperatorFamily:
    """Time-dependent family B(t): constant, piecewise-constant, or a
    linear interpolation between two endpoint matrices."""

    def __init__(
        self,
        kind: str,
        matrices: list[OperatorMatrix],
        times: list[float] | None = None,
    ):
        if kind not in ("constant", "piecewise", "linear"):
            raise InvalidInput(f"unknown family kind {kind!r}")
        if kind == "constant" and len(matrices) != 1:
            raise InvalidInput("constant family takes exactly one matrix")
        if kind == "piecewise":
            if times is None or len(times) != len(matrices):
                raise InvalidInput("piecewise family needs one time per matrix")
            if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
                raise InvalidInput("piecewise times must be increasing")
        if kind == "linear":
            if times is None or len(times) != 2 or len(matrices) != 2:
                raise InvalidInput("linear family needs two matrices and two times")
        self.kind = kind
        self.matrices = matrices
        self.times = times

    @classmethod
    def constant(cls, B: OperatorMatrix) -> "OperatorFamily":
        return cls("constant", [B])

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def at(self, t: float) -> OperatorMatrix:
        if self.kind == "constant":
            return self.matrices[0]
        if self.kind == "piecewise":
            idx = int(np.searchsorted(np.asarray(self.times), t, side="right")) - 1
            return self.matrices[max(idx, 0)]
        t0, t1 = self.times
        lam = min(max((t - t0) / (t1 - t0), 0.0), 1.0)
        return self.matrices[0].scaled(1.0 - lam).plus(self.matrices[1].scaled(lam))

    def dense_at(self, t: float, nrows: int, ncols: int) -> np.ndarray:
        return self.at(t).to_dense(nrows, ncols)

    def ambient_dim(self) -> int:
        return max(max(m.max_row, m.max_col) + 1 for m in self.matrices)

    def transpose_reversed(self, s: float, t: float) -> "OperatorFamily":
        """Family r -> B(s + t - r)^T, the coefficient of the adjoint system."""
        mats = [m.transpose() for m in self.matrices]
        if self.kind == "constant":
            return OperatorFamily("constant", mats)
        if self.kind == "linear":
            t0, t1 = self.times
            return OperatorFamily("linear", list(reversed(mats)), [s + t - t1, s + t - t0])
        # piecewise: intervals reverse; breakpoints map r -> s + t - r
        rev_times = [s + t - x for x in reversed(self.times[1:])] + [self.times[0]]
        rev_times = sorted(set(rev_times))
        # evaluate the reversed family by lookup to keep semantics simple
        mats_rev = [self.at(s + t - (x + 1e-12)).transpose() for x in rev_times]
        return OperatorFamily("piecewise", mats_rev, rev_times)

    def fit_majorant(
        self,
        alpha_star: float,
        alpha_grid,
        safety: float = 1.1,
        n_time_samples: int = 9,
    ) -> MajorantM:
        """Majorant valid for all times: pointwise max of per-time fits."""
        if self.kind == "constant":
            return fit_majorant(self.matrices[0], alpha_star, alpha_grid, safety)
        if self.kind == "piecewise":
            ts = list(self.times)
        else:
            t0, t1 = self.times
            ts = list(np.linspace(t0, t1, n_time_samples))
        fits = [fit_majorant(self.at(t), alpha_star, alpha_grid, safety) for t in ts]
        grid = [a for a, _ in fits[0].knots]
        knots = tuple(
            (a, max(f.knots[i][1] for f in fits)) for i, a in enumerate(grid)
        )
        return MajorantM(alpha_star=alpha_star, knots=knots, safety=safety)
