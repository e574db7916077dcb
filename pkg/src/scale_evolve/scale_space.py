"""Weighted-l1 sequence spaces, their weighted-linf duals, and truncation.

A vector u lives in every space E_alpha with finite norm
sum_n |u_n| e^(alpha*n); a dual functional l lives in B_alpha with norm
sup_n |l_n| e^(-alpha*n).  Vectors here have finite support plus a scalar
tail certificate: ``tail_bound`` is an upper bound on the alpha-norm of
everything that was ever discarded, certified at ``tail_alpha`` and valid
conservatively for all alpha <= tail_alpha.

An optional ``levels`` array generalises the weight exponent: entry i is
weighted by e^(alpha*levels[i]) instead of e^(alpha*i).  The default
(levels None) is the plain sequence space; the particle-hierarchy code
uses levels to weight flattened tensors by particle number.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, RangeOverflow

# exp argument beyond which e^x overflows float64
_EXP_MAX = 700.0

_weight_cache: dict[tuple, np.ndarray] = {}


def _as_levels(levels: np.ndarray | None, n: int) -> np.ndarray:
    if levels is None:
        return np.arange(n, dtype=np.float64)
    return np.asarray(levels, dtype=np.float64)


def weights(alpha: float, levels: np.ndarray) -> np.ndarray:
    """Weights e^(alpha*level), cached per (alpha, levels)."""
    key = (float(alpha), levels.tobytes())
    w = _weight_cache.get(key)
    if w is None:
        if levels.size and alpha * float(levels.max()) > _EXP_MAX:
            raise RangeOverflow(
                f"e^(alpha*n) overflows for alpha={alpha}, n={levels.max()}"
            )
        w = np.exp(alpha * levels)
        w.flags.writeable = False
        _weight_cache[key] = w
    return w


@dataclass(frozen=True)
class ScaleVector:
    """Finitely supported element of the scale (E_alpha)_alpha.

    ``tail_bound`` bounds the alpha-norm of discarded entries for every
    alpha <= tail_alpha; a vector built from exact finite data has
    tail_bound 0.
    """

    entries: np.ndarray
    tail_alpha: float = 0.0
    tail_bound: float = 0.0
    levels: np.ndarray | None = None

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 1:
            raise InvalidInput("entries must be one-dimensional")
        if not np.all(np.isfinite(e)):
            raise InvalidInput("entries must be finite")
        if self.tail_bound < 0:
            raise InvalidInput("tail_bound must be >= 0")
        e = e.copy()
        e.flags.writeable = False
        object.__setattr__(self, "entries", e)
        if self.levels is not None:
            lv = np.asarray(self.levels, dtype=np.float64)
            if lv.shape != e.shape:
                raise InvalidInput("levels must match entries in length")
            lv = lv.copy()
            lv.flags.writeable = False
            object.__setattr__(self, "levels", lv)

    @property
    def support_len(self) -> int:
        return int(self.entries.size)

    def level_array(self) -> np.ndarray:
        return _as_levels(self.levels, self.entries.size)

    def to_json(self) -> str:
        doc = {
            "entries": list(map(float, self.entries)),
            "tail_alpha": float(self.tail_alpha),
            "tail_bound": float(self.tail_bound),
        }
        if self.levels is not None:
            doc["levels"] = list(map(float, self.levels))
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScaleVector":
        doc = json.loads(text)
        lv = doc.get("levels")
        return cls(
            entries=np.asarray(doc["entries"], dtype=np.float64),
            tail_alpha=float(doc.get("tail_alpha", 0.0)),
            tail_bound=float(doc.get("tail_bound", 0.0)),
            levels=None if lv is None else np.asarray(lv, dtype=np.float64),
        )

    def to_csv(self) -> str:
        lines = ["index,value"]
        lines += [f"{i},{v!r}" for i, v in enumerate(map(float, self.entries))]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DualVector:
    """Finitely supported functional in B_alpha = E_alpha^*."""

    entries: np.ndarray
    levels: np.ndarray | None = None

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 1 or not np.all(np.isfinite(e)):
            raise InvalidInput("entries must be a finite 1-d array")
        e = e.copy()
        e.flags.writeable = False
        object.__setattr__(self, "entries", e)
        if self.levels is not None:
            lv = np.asarray(self.levels, dtype=np.float64).copy()
            lv.flags.writeable = False
            object.__setattr__(self, "levels", lv)

    @property
    def support_len(self) -> int:
        return int(self.entries.size)

    def level_array(self) -> np.ndarray:
        return _as_levels(self.levels, self.entries.size)


def norm_alpha(u: ScaleVector, alpha: float) -> float:
    """sum_n |u_n| e^(alpha*n), compensated summation in index order.

    Does not include the tail certificate; raises RangeOverflow if a
    weight would overflow.
    """
    if u.support_len == 0:
        return 0.0
    w = weights(alpha, u.level_array())
    return math.fsum(np.abs(u.entries) * w)


def dual_norm(l: DualVector, alpha: float) -> float:
    """sup_n |l_n| e^(-alpha*n)."""
    if l.support_len == 0:
        return 0.0
    w = weights(-alpha, l.level_array())
    return float(np.max(np.abs(l.entries) * w))


def dual_pairing(u: ScaleVector, l: DualVector) -> float:
    """<u, l> = sum_n u_n l_n with zero-extension of the shorter support."""
    n = min(u.support_len, l.support_len)
    if n == 0:
        return 0.0
    return math.fsum(u.entries[:n] * l.entries[:n])


def truncate(u: ScaleVector, N: int, alpha_max: float) -> ScaleVector:
    """Keep entries 0..N-1 and fold the dropped mass into the tail bound.

    The new tail bound is certified at alpha_max and dominates the old one:
    for every alpha <= alpha_max, the original norm is bounded by the
    truncated norm plus tail_bound.
    """
    if N < 0:
        raise InvalidInput("N must be >= 0")
    if N >= u.support_len:
        return u
    lv = u.level_array()
    dropped = math.fsum(np.abs(u.entries[N:]) * weights(alpha_max, lv[N:]))
    old_tail = u.tail_bound
    if u.tail_alpha > alpha_max and old_tail > 0.0:
        # old certificate at a higher alpha remains valid at alpha_max
        pass
    elif u.tail_alpha < alpha_max and old_tail > 0.0:
        raise InvalidInput(
            "cannot re-certify an existing tail bound at a larger alpha_max"
        )
    return ScaleVector(
        entries=u.entries[:N],
        tail_alpha=alpha_max,
        tail_bound=old_tail + dropped,
        levels=None if u.levels is None else lv[:N],
    )


def basis_vector(j: int, n: int, levels: np.ndarray | None = None) -> ScaleVector:
    e = np.zeros(n)
    e[j] = 1.0
    return ScaleVector(e, levels=levels)
